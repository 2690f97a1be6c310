import os

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def tables():
    from glintibl.core_brdf import load_albedo_tables
    return load_albedo_tables()


@pytest.fixture(scope="session")
def three_region():
    """The synthetic sky/ground/sun environment and its full-quality prefiltered chain."""
    from glintibl.envmap import compute_levels, prefilter, three_region_env
    env = three_region_env()
    return env, prefilter(env, compute_levels(env, 8))


@pytest.fixture(scope="session")
def small_env():
    """Cheap prefiltered environment for shape and plumbing tests."""
    from glintibl.envmap import compute_levels, prefilter, three_region_env
    env = three_region_env(64)
    return env, prefilter(env, compute_levels(env, 4), mip_count=4, samples_per_texel=64, base_width=64)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one line per acceptance criterion; all lines are repeated in the terminal summary."""
    def log(number, title, passed, detail, seconds, budget):
        in_time = seconds < budget
        status = "PASS" if passed and in_time else "FAIL"
        line = f"criterion {number:>2d} {status} {title}: {detail}; runtime {seconds:.1f}s (limit {budget:.0f}s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed and in_time
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
