import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glintibl.counting import (POW_EPSILON, binomial_pmf, dual_gated, empirical_pmf, inverse_normal_cdf,
                               naive_pow_one_minus, normalize_bins, sample_binomial_exact, sample_multinomial,
                               single_gated, stable_pow_one_minus, total_variation)
from glintibl.rng import RandomStream
from scipy import stats

DRAWS = 200000


def draws(seed, count=DRAWS):
    s = RandomStream(seed)
    idx = np.arange(count)
    return s.uniform(idx, 0), s.uniform(idx, 1)


# pow ----------------------------------------------------------------------------

def test_pow_epsilon_value():
    assert POW_EPSILON == pytest.approx(10 ** -3.54)


def test_pow_edge_cases():
    assert stable_pow_one_minus(0.3, 0.0) == 1.0
    assert stable_pow_one_minus(1.0, 5.0) == 0.0
    assert stable_pow_one_minus(0.0, 1e12) == 1.0
    assert stable_pow_one_minus(0.5, 2.0).dtype == np.float32


def test_naive_pow_collapses_for_tiny_p():
    # 1 - 1e-9 rounds to 1 in float32, so the naive form returns 1 instead of e^-10
    assert naive_pow_one_minus(1e-9, 1e10) == 1.0
    assert abs(float(stable_pow_one_minus(1e-9, 1e10)) - math.exp(-10)) < 1e-4


@given(st.floats(-16, 0), st.floats(0, 16))
def test_stable_pow_matches_float64(log_p, log_n):
    p, n = 10.0 ** log_p, 10.0 ** log_n
    p32, n32 = float(np.float32(p)), float(np.float32(n))
    exact = math.exp(n32 * math.log1p(-p32)) if p32 < 1 else 0.0
    assert abs(float(stable_pow_one_minus(p, n)) - exact) < 1e-3


# normal quantile ----------------------------------------------------------------

def test_inverse_normal_cdf_against_scipy():
    xi = np.linspace(1e-9, 1 - 1e-9, 10001)
    assert np.max(np.abs(inverse_normal_cdf(xi) - stats.norm.ppf(xi))) < 5e-9 * 1e3


def test_inverse_normal_cdf_scaling_and_degenerate_sigma():
    assert inverse_normal_cdf(0.5, 3.0, 4.0) == pytest.approx(3.0)
    assert inverse_normal_cdf(0.8413447460685429, 1.0, 4.0) == pytest.approx(3.0, abs=1e-6)
    assert inverse_normal_cdf(0.9, 2.0, 0.0) == 2.0
    assert np.isfinite(inverse_normal_cdf(np.array([0.0, 1.0]))).all()


# exact sampler oracle -----------------------------------------------------------

def test_exact_sampler_matches_pmf():
    k = sample_binomial_exact(np.full(DRAWS, 7), 0.35, RandomStream(3), np.arange(DRAWS))
    assert total_variation(empirical_pmf(k, 8), binomial_pmf(7, 0.35)) < 0.005


def test_exact_sampler_rejects_fractional_n():
    with pytest.raises(ValueError):
        sample_binomial_exact(2.5, 0.3, RandomStream(0), 0)


# single gated -------------------------------------------------------------------

def test_single_gated_is_exact_bernoulli_at_one():
    xi1, xi2 = draws(4)
    out = single_gated(1.0, 0.3, xi1, xi2)
    assert set(np.unique(out)) <= {0.0, 1.0}
    assert abs(out.mean() - 0.3) < 0.005


def test_single_gated_is_asymmetric_at_two():
    xi1, xi2 = draws(5)
    a = empirical_pmf(single_gated(2.0, 0.3, xi1, xi2), 3)
    b = empirical_pmf(2.0 - single_gated(2.0, 0.7, xi1, xi2), 3)
    assert total_variation(a, b) > 0.02


# dual gated ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 1, 2])
@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_dual_gated_exact_for_small_n(n, p):
    xi1, xi2 = draws(10 + n)
    out = dual_gated(float(n), p, xi1, xi2, integral=True)
    assert total_variation(empirical_pmf(out.n_pos, n + 1), binomial_pmf(n, p)) < 0.005


def test_dual_gated_between_rows_dithers():
    # n = 0.5: one trial half of the time, mean n p
    xi1, xi2 = draws(20)
    out = dual_gated(0.5, 0.4, xi1, xi2)
    assert set(np.unique(out.n_pos)) <= {0.0, 1.0}
    assert abs(out.n_pos.mean() - 0.2) < 0.005


UNIT = st.floats(0, 1, exclude_max=True)


@given(st.floats(2, 300), st.floats(0, 1), UNIT, UNIT, st.sampled_from(["paper", "matched"]))
def test_dual_gated_conserves_and_bounds(n, p, xi1, xi2, variant):
    out = dual_gated(n, p, xi1, xi2, gaussian=variant)
    assert out.n_pos + out.n_neg == pytest.approx(n, rel=1e-12, abs=1e-12)
    assert -1e-12 <= float(out.n_pos) <= n + 1e-12


@pytest.mark.parametrize("n", [0.3, 1.0, 1.5, 1.9])
def test_dual_gated_conserves_in_expectation_below_two(n):
    # real n < 2 dithers between the exact rows 0, 1 and 2
    xi1, xi2 = draws(21)
    out = dual_gated(n, 0.35, xi1, xi2)
    total = out.n_pos + out.n_neg
    assert set(np.unique(total)) <= {float(math.floor(n)), float(math.ceil(n))}
    assert abs(total.mean() - n) < 0.005
    assert abs(out.n_pos.mean() - 0.35 * n) < 0.005


@given(st.integers(0, 500), st.floats(0, 1), UNIT, UNIT)
def test_dual_gated_integral_split(n, p, xi1, xi2):
    out = dual_gated(float(n), p, xi1, xi2, integral=True, gaussian="matched")
    assert float(out.n_pos) == math.floor(float(out.n_pos))
    assert float(out.n_pos + out.n_neg) == n


@pytest.mark.parametrize("n", [1.5, 2.0, 6.0, 40.0])
def test_dual_gated_symmetry_in_distribution(n):
    xi1, xi2 = draws(22)
    a = dual_gated(n, 0.3, xi1, xi2, integral=True).n_pos
    xi1, xi2 = draws(23)
    b = dual_gated(n, 0.7, xi1, xi2, integral=True).n_neg
    size = int(math.ceil(n)) + 1
    assert total_variation(empirical_pmf(a, size), empirical_pmf(b, size)) < 0.01


def test_endpoint_probabilities():
    out = dual_gated(np.array([5.0, 5.0]), np.array([0.0, 1.0]), 0.5, 0.5)
    assert out.n_pos.tolist() == [0.0, 5.0]
    assert out.n_neg.tolist() == [5.0, 0.0]


def test_unknown_variant():
    with pytest.raises(ValueError):
        dual_gated(3.0, 0.5, 0.1, 0.1, gaussian="bogus")


@pytest.mark.parametrize("n,p", [(20.0, 0.02), (50.0, 0.3), (7.5, 0.9), (1000.0, 0.001)])
def test_matched_variant_is_unbiased(n, p):
    xi1, xi2 = draws(30)
    out = dual_gated(n, p, xi1, xi2, gaussian="matched")
    se = math.sqrt(n * p * (1 - p) / DRAWS)
    assert abs(out.n_pos.mean() - n * p) < 4 * se + 1e-3 * n * p


def test_paper_variant_bias_is_visible_for_rare_events():
    # one forced positive inflates the mean when n p (1-p) is small
    xi1, xi2 = draws(31)
    out = dual_gated(20.0, 0.02, xi1, xi2, gaussian="paper")
    assert out.n_pos.mean() > 1.1 * 20 * 0.02


# multinomial --------------------------------------------------------------------

def test_normalize_bins():
    out = normalize_bins([0.2, -0.1, 0.3, 0.0])
    assert out.tolist() == pytest.approx([0.2, 0.0, 0.3, 0.5])
    out = normalize_bins([0.8, 0.8, 0.0])
    assert out.sum() == pytest.approx(1.0)


def test_multinomial_conservation_and_means():
    probs = np.array([0.1, 0.25, 0.05, 0.3, 0.3])
    counts = sample_multinomial(40.0, probs, RandomStream(8), vertex_id=np.arange(DRAWS))
    assert np.all(counts.sum(axis=-1) == 40)
    assert np.all(counts == np.floor(counts))
    assert np.max(np.abs(counts.mean(axis=0) / (40 * probs) - 1)) < 0.02


def test_multinomial_real_count_conserves_on_average():
    counts = sample_multinomial(3.7, [0.2, 0.5, 0.3], RandomStream(1), vertex_id=np.arange(DRAWS))
    assert abs(counts.sum(axis=-1).mean() - 3.7) < 0.01
    assert np.max(np.abs(counts.mean(axis=0) - 3.7 * np.array([0.2, 0.5, 0.3]))) < 0.01


def test_multinomial_deterministic_per_vertex():
    a = sample_multinomial(10.0, [0.3, 0.3, 0.4], RandomStream(2), vertex_id=np.arange(10))
    b = sample_multinomial(10.0, [0.3, 0.3, 0.4], RandomStream(2), vertex_id=np.arange(10))
    c = sample_multinomial(10.0, [0.3, 0.3, 0.4], RandomStream(2), vertex_id=np.arange(10) + 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=9), st.integers(0, 200), st.integers(0, 2 ** 32))
def test_multinomial_property(probs, n, vertex):
    counts = sample_multinomial(float(n), probs, RandomStream(0), vertex_id=vertex)
    assert counts.sum() == n
    assert np.all(counts >= 0)
    p = normalize_bins(probs)
    assert np.all(counts[p == 0] == 0)


def test_total_variation_pads():
    assert total_variation([1.0], [0.5, 0.5]) == pytest.approx(0.5)
