"""Statistical and image validations behind the CLI.

Every check produces a :class:`ValidationReport` whose metric lines read
``name metric value threshold PASS|FAIL``; free-form lines (headers, text
histograms) start with ``#`` so the report stays line-parseable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from .counting import (binomial_pmf, dual_gated, empirical_pmf, naive_pow_one_minus, sample_binomial_exact,
                       sample_multinomial, single_gated, stable_pow_one_minus, total_variation)
from .imageio import read_image, write_pfm
from .rng import RandomStream

TV_THRESHOLD = 0.005
ORACLE_PRECISION_BITS = 160
POW_FAILURE_LOG10_P = -7.525
SHADES = " .:-=+*#%@"


@dataclass
class Metric:
    name: str
    metric: str
    value: float
    threshold: float
    op: str = "<="

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return {"<=": self.value <= self.threshold, ">=": self.value >= self.threshold,
                "<": self.value < self.threshold, ">": self.value > self.threshold}[self.op]

    def line(self) -> str:
        return f"{self.name} {self.metric} {self.value:.6g} {self.threshold:.6g} {'PASS' if self.passed else 'FAIL'}"


@dataclass
class ValidationReport:
    title: str
    metrics: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, name, metric, value, threshold, op="<=") -> Metric:
        m = Metric(name, metric, float(value), float(threshold), op)
        self.metrics.append(m)
        return m

    def note(self, text: str) -> None:
        self.notes.extend(text.splitlines() or [""])

    @property
    def ok(self) -> bool:
        return all(m.passed for m in self.metrics)

    def lines(self) -> list:
        out = [f"# {self.title}"] + [f"# {n}" for n in self.notes]
        return out + [m.line() for m in self.metrics]

    def text(self) -> str:
        return "\n".join(self.lines())

    def extend(self, other: "ValidationReport") -> None:
        self.notes.append(other.title)
        self.notes.extend(other.notes)
        self.metrics.extend(other.metrics)


# counting ----------------------------------------------------------------------

def _uniforms(stream: RandomStream, tag: int, count: int):
    idx = np.arange(count)
    return stream.uniform(tag, idx, 0), stream.uniform(tag, idx, 1)


def check_small_n_exactness(report, draws: int, seed: int = 0, probs=(0.1, 0.3, 0.5, 0.7, 0.9)):
    """Dual-gated pmf against the exact binomial for N in {0, 1, 2}."""
    stream = RandomStream(seed)
    worst = 0.0
    for n in (0, 1, 2):
        for j, p in enumerate(probs):
            xi1, xi2 = _uniforms(stream, 100 + 10 * n + j, draws)
            out = dual_gated(float(n), p, xi1, xi2, integral=True)
            tv = total_variation(empirical_pmf(out.n_pos, n + 1), binomial_pmf(n, p))
            worst = max(worst, tv)
            report.add(f"exact_N{n}_p{p:g}", "tv", tv, TV_THRESHOLD)
    return worst


def check_symmetry(report, draws: int, seed: int = 0):
    """n_pos at p is distributed like n_neg at 1-p (dual-gated); single-gated is not."""
    stream = RandomStream(seed)
    for n in (1.5, 2.0, 5.0):
        for p in (0.2, 0.4):
            xi1, xi2 = _uniforms(stream, 200 + int(10 * n), draws)
            a = dual_gated(n, p, xi1, xi2).n_pos
            b = dual_gated(n, 1.0 - p, xi1, xi2).n_neg
            tv = total_variation(empirical_pmf(a, 8), empirical_pmf(b, 8))
            report.add(f"dual_symmetry_N{n:g}_p{p:g}", "tv", tv, TV_THRESHOLD)
    # a single-gated sampler at exactly N=1 is a plain Bernoulli, so the
    # asymmetry is reported where the Gaussian branch is reachable
    for n in (1.5, 2.0):
        xi1, xi2 = _uniforms(stream, 300 + int(10 * n), draws)
        a = single_gated(n, 0.3, xi1, xi2)
        b = n - single_gated(n, 0.7, xi1, xi2)
        tv = total_variation(empirical_pmf(a, 4), empirical_pmf(b, 4))
        report.add(f"single_asymmetry_N{n:g}_p0.3", "tv", tv, 0.01, ">")


def check_conservation(report, draws: int, seed: int = 0):
    stream = RandomStream(seed)
    idx = np.arange(draws)
    # exact for n >= 2; below that the rows 0, 1, 2 are dithered and only the mean is kept
    n = 2.0 * 10.0 ** (3.0 * stream.uniform(400, idx))
    p = stream.uniform(401, idx)
    out = dual_gated(n, p, stream.uniform(402, idx), stream.uniform(403, idx))
    err = float(np.max(np.abs(out.n_pos + out.n_neg - n) / n))
    report.add("dual_conservation", "max_rel_err", err, 1e-12)
    small = np.full(draws, 1.37)
    out = dual_gated(small, p, stream.uniform(406, idx), stream.uniform(407, idx))
    total = out.n_pos + out.n_neg
    z = abs(float(total.mean()) - 1.37) / max(float(total.std()) / math.sqrt(draws), 1e-300)
    report.add("dual_conservation_mean_N1.37", "z", z, 4.0)
    integral = np.floor(10.0 ** (3.0 * stream.uniform(408, idx)))
    out = dual_gated(integral, p, stream.uniform(404, idx), stream.uniform(405, idx), integral=True,
                     gaussian="matched")
    bad = (out.n_pos + out.n_neg != integral) | (out.n_pos != np.floor(out.n_pos))
    report.add("dual_conservation_integral", "violations", int(np.sum(bad)), 0)


def check_gate_probabilities(report, draws: int, seed: int = 0):
    """P(n = N) = p^N and P(n_bar = N) = (1-p)^N within three binomial sigmas."""
    stream = RandomStream(seed)
    worst = 0.0
    for n in (3, 10):
        for p in (0.3, 0.7):
            xi1, xi2 = _uniforms(stream, 500 + n + int(100 * p), draws)
            out = dual_gated(float(n), p, xi1, xi2, integral=True)
            for label, hit, target in (("all_pos", out.n_pos == n, p ** n), ("all_neg", out.n_neg == n, (1 - p) ** n)):
                sigma = math.sqrt(target * (1.0 - target) / draws)
                z = abs(float(np.mean(hit)) - target) / max(sigma, 1e-300)
                worst = max(worst, z)
                report.add(f"gate_{label}_N{n}_p{p:g}", "z", z, 3.0)
    return worst


def gate_min_identity(n, p) -> tuple[np.ndarray, np.ndarray]:
    """(min(N p, P), the claimed closed form) with P = 1 - (1-p)^N."""
    n = np.asarray(n, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    p_any = -np.expm1(n * np.log1p(-p))
    return np.minimum(n * p, p_any), np.where(n < 1.0, n * p, p_any)


def check_gate_identity(report, count: int = 10 ** 5, seed: int = 0):
    stream = RandomStream(seed)
    idx = np.arange(count)
    n = 10.0 ** (6.0 * stream.uniform(600, idx) - 3.0)
    p = np.clip(stream.uniform(601, idx), 1e-12, 1.0 - 1e-12)
    lhs, rhs = gate_min_identity(n, p)
    violations = int(np.sum(np.abs(lhs - rhs) > 1e-12))
    report.add("gate_min_identity", "violations", violations, 0)
    return violations


def check_multinomial(report, draws: int = 10 ** 5, seed: int = 0, vectors: int = 3):
    """Bins sum to N on every draw; per-bin means within 3% of N p_k."""
    stream = RandomStream(seed)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (10, 100):
        for v in range(vectors):
            probs = rng.dirichlet(np.ones(4)) * rng.uniform(0.6, 0.95)
            full = np.append(probs, 1.0 - probs.sum())
            counts = sample_multinomial(float(n), full, stream.child(700 + 10 * n + v), vertex_id=np.arange(draws))
            sums_bad = int(np.sum(counts.sum(axis=-1) != n))
            rel = np.abs(counts.mean(axis=0) - n * full) / (n * full)
            worst = max(worst, float(rel.max()))
            report.add(f"multinomial_sum_N{n}_v{v}", "violations", sums_bad, 0)
            report.add(f"multinomial_mean_N{n}_v{v}", "max_rel_err", float(rel.max()), 0.03)
    return worst


def gating_tv_grid(draws: int = 20000, seed: int = 0, p_steps: int = 11, n_steps: int = 9):
    """TV distance to the exact binomial of single- and dual-gated over p x log10 N."""
    stream = RandomStream(seed)
    ps = np.linspace(0.0, 1.0, p_steps)
    ns = np.unique(np.round(10.0 ** np.linspace(0.0, 2.0, n_steps)))
    single = np.zeros((ns.size, ps.size))
    dual = np.zeros_like(single)
    for i, n in enumerate(ns):
        for j, p in enumerate(ps):
            xi1, xi2 = _uniforms(stream, 800 + 100 * i + j, draws)
            exact = binomial_pmf(int(n), p)
            size = int(n) + 1
            single[i, j] = total_variation(empirical_pmf(single_gated(n, p, xi1, xi2), size), exact)
            dual[i, j] = total_variation(empirical_pmf(dual_gated(n, p, xi1, xi2, integral=True).n_pos, size), exact)
    return ps, ns, single, dual


def text_histogram(ps, ns, grid, label: str) -> str:
    """Character shading of a TV grid; rows are N (largest on top), columns p."""
    rows = [f"{label}: TV vs exact binomial, shade ' '=0 .. '@'>=0.5"]
    for i in range(len(ns) - 1, -1, -1):
        cells = "".join(SHADES[min(len(SHADES) - 1, int(v / 0.5 * (len(SHADES) - 1) + 0.5))] for v in grid[i])
        rows.append(f"N={int(ns[i]):>4d} |{cells}|")
    rows.append("       p=0" + " " * max(0, len(ps) - 3) + "1")
    return "\n".join(rows)


def validate_counting(draws: int = 10 ** 6, seed: int = 0, histogram_draws: int = 20000) -> ValidationReport:
    if draws < 10 ** 5:
        raise ValueError("validate-counting needs at least 1e5 draws")
    report = ValidationReport(f"validate-counting draws={draws} seed={seed}")
    check_small_n_exactness(report, draws, seed)
    check_symmetry(report, draws, seed)
    check_conservation(report, draws, seed)
    check_gate_probabilities(report, draws, seed)
    check_gate_identity(report, 10 ** 5, seed)
    check_multinomial(report, 10 ** 5, seed)
    ps, ns, single, dual = gating_tv_grid(histogram_draws, seed)
    report.note(text_histogram(ps, ns, single, "single-gated"))
    report.note(text_histogram(ps, ns, dual, "dual-gated"))
    return report


def exact_vs_sampler_tv(n: int, p: float, draws: int, seed: int = 0) -> float:
    """TV between the scipy inverse-CDF sampler and the exact pmf (sanity of the oracle)."""
    k = sample_binomial_exact(np.full(draws, n), p, RandomStream(seed), np.arange(draws))
    return total_variation(empirical_pmf(k, n + 1), binomial_pmf(n, p))


# pow ---------------------------------------------------------------------------

def pow_grid(points: int = 33):
    """Log grid N in [1, 1e16] (rows) by p in [1e-16, 1] (columns)."""
    e = np.linspace(0.0, 16.0, points)
    return 10.0 ** e, 10.0 ** (e - 16.0)


def pow_oracle(p, n, precision_bits: int = ORACLE_PRECISION_BITS) -> np.ndarray:
    """exp(N log1p(-p)) in arbitrary precision at the float32-rounded inputs."""
    p32 = np.asarray(p, dtype=np.float32).astype(np.float64)
    n32 = np.asarray(n, dtype=np.float32).astype(np.float64)
    out = np.empty(np.broadcast_shapes(p32.shape, n32.shape))
    pb, nb = np.broadcast_arrays(p32, n32)
    with mpmath.workprec(precision_bits):
        for i in np.ndindex(out.shape):
            pi, ni = mpmath.mpf(float(pb[i])), mpmath.mpf(float(nb[i]))
            if ni == 0:
                out[i] = 1.0
            elif pi >= 1:
                out[i] = 0.0
            else:
                out[i] = float(mpmath.exp(ni * mpmath.log1p(-pi)))
    return out


def validate_pow(out_dir=None, points: int = 33) -> ValidationReport:
    report = ValidationReport(f"validate-pow grid={points}x{points} plus an N=0 row")
    report.note(f"oracle: exp(N*log1p(-p)) with mpmath at {ORACLE_PRECISION_BITS}-bit precision, "
                "inputs rounded to float32 first")
    n, p = pow_grid(points)
    nn, pp = np.meshgrid(np.concatenate([[0.0], n]), p, indexing="ij")
    oracle = pow_oracle(pp, nn)
    naive = np.abs(naive_pow_one_minus(pp, nn).astype(np.float64) - oracle)
    stable = np.abs(stable_pow_one_minus(pp, nn).astype(np.float64) - oracle)
    region = (pp < 10.0 ** POW_FAILURE_LOG10_P) & (nn > 1.0 / pp)
    report.add("naive_failure_region", "max_abs_err", float(naive[region].max()), 0.9, ">=")
    report.add("stable_full_grid", "max_abs_err", float(stable[1:].max()), 1e-3)
    report.add("naive_N0_row", "max_abs_err", float(naive[0].max()), 0.0)
    report.add("stable_N0_row", "max_abs_err", float(stable[0].max()), 0.0)
    report.note(f"naive max abs err outside the failure region: {float(naive[~region].max()):.6g}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_pfm(out / "pow_error_naive.pfm", naive.astype(np.float32))
        write_pfm(out / "pow_error_stable.pfm", stable.astype(np.float32))
        report.note(f"error maps (row 0: N=0, rows 1..: log10 N ascending; columns log10 p ascending) in {out}")
    return report


# images ------------------------------------------------------------------------

def relative_error_map(a, b, floor: float = 0.01, mask=None):
    """|la - lb| / min(la, lb) on Rec.709 luminance over pixels whose smaller luminance exceeds ``floor``.

    ``mask`` (optional, boolean) restricts the selection further.
    """
    from .renderer import lum709

    la = lum709(a)
    lb = lum709(b)
    small = np.minimum(la, lb)
    sel = small > floor
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    rel = np.zeros_like(la)
    rel[sel] = np.abs(la[sel] - lb[sel]) / small[sel]
    return rel, sel


def compare_images(a, b, threshold: float = 0.05, floor: float = 0.01, name: str = "compare",
                   mask=None) -> ValidationReport:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    rel, sel = relative_error_map(a, b, floor, mask)
    report = ValidationReport(f"{name} luminance_floor={floor:g} pixels={int(sel.sum())}")
    mean = float(rel[sel].mean()) if sel.any() else 0.0
    report.add(name, "mean_rel_err", mean, threshold, "<")
    report.note(f"max relative error {float(rel[sel].max()) if sel.any() else 0.0:.6g}")
    return report


def compare_files(path_a, path_b, threshold: float = 0.05, floor: float = 0.01) -> ValidationReport:
    return compare_images(read_image(path_a), read_image(path_b), threshold, floor)


# furnace -----------------------------------------------------------------------

FURNACE_DENSITIES = (math.exp(-2.0), 1.0, math.exp(2.0))


def validate_furnace(resolution: int = 128, sqrt_alpha: float = 0.4, densities=FURNACE_DENSITIES,
                     realizations: int = 1024, log_n0: float = 14.0, seed: int = 0, threads: int = 1,
                     threshold: float = 0.03, out_dir=None, tables=None) -> ValidationReport:
    """Glint furnace renders averaged over realizations against the smooth render."""
    from .core_brdf import SurfaceMaterial
    from .renderer import Camera, PreparedFrame, Scene, furnace_inputs, glint_fraction, lum709, tonemap_write

    env, penv = furnace_inputs()
    report = ValidationReport(f"furnace {resolution}x{resolution} sqrt_alpha={sqrt_alpha:g} "
                              f"realizations={realizations} log_n0={log_n0:g}")
    root = RandomStream(seed)
    checked_split = False
    for rho in densities:
        mat = SurfaceMaterial.from_sqrt_alpha(sqrt_alpha, log_n0=log_n0, density_scale=rho)
        scene = Scene(camera=Camera(width=resolution, height=resolution), material=mat)
        frame = PreparedFrame(scene, penv, tables, env, threads)
        smooth = frame.smooth
        if not checked_split:
            expect = frame.tables.albedo(mat.f0, frame.cos_o, mat.alpha)
            sel = lum709(expect) > 0.01
            dev = np.abs(lum709(smooth) - lum709(expect))[sel] / lum709(expect)[sel]
            report.add("furnace_smooth_vs_split_sum", "max_rel_err", float(dev.max()), 0.01)
            checked_split = True
        acc = np.zeros(frame.pixel_count)
        first = None
        for r in range(realizations):
            mod = frame.glint_modulation(int(root.hash(r)))
            if first is None:
                first = mod
            acc += mod
        tag = f"rho_{math.log(rho):+g}"
        mean_img = smooth * (acc / realizations)[:, None]
        rel, sel = relative_error_map(mean_img, smooth)
        report.add(f"furnace_{tag}", "mean_rel_err", float(rel[sel].mean()), threshold, "<")
        report.note(f"{tag}: max per-pixel relative error {float(rel[sel].max()):.4g}, "
                    f"E[N_P] range {frame.expected_count.min():.3g}..{frame.expected_count.max():.3g}")
        frac = glint_fraction(smooth * first[:, None], smooth)
        if rho < 1.0:
            report.add(f"furnace_{tag}_single_glint_fraction", "fraction", frac, 0.01, ">")
        else:
            report.note(f"{tag}: single-realization glint fraction {frac:.4g}")
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            tonemap_write(frame.image(first), 0.0, out / f"furnace_{tag}_single.png")
            tonemap_write(frame.image(acc / realizations), 0.0, out / f"furnace_{tag}_mean.png")
            tonemap_write(frame.image(), 0.0, out / "furnace_smooth.png")
    return report
