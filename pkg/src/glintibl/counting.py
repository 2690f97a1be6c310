"""Constant-time approximate binomial and multinomial sampling.

All samplers are vectorized: ``n``, ``p`` and the uniforms broadcast against
each other, and scalars come back as 0-d arrays.  Counts are real valued;
nothing here floors its output.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .rng import RandomStream

# smallest probability for which (1 - eps)^N is still accurate in float32
POW_EPSILON = 10.0 ** -3.54

_XI_MIN = 2.0 ** -40


def stable_pow_one_minus(p, n) -> np.ndarray:
    """(1 - p)^n evaluated entirely in float32, robust for tiny ``p``.

    Uses ``(1 - c*p)^(n/c)`` with ``c = max(1, eps/p)``: for ``p >= eps`` this
    is the plain power, below it the base stays far enough from 1 to survive
    float32 rounding.
    """
    p32 = np.asarray(p, dtype=np.float32)
    n32 = np.asarray(n, dtype=np.float32)
    one = np.float32(1.0)
    with np.errstate(divide="ignore"):
        c = np.where(p32 > 0, np.maximum(one, np.float32(POW_EPSILON) / p32), one).astype(np.float32)
    base = one - c * p32
    return np.power(base, n32 / c)


def naive_pow_one_minus(p, n) -> np.ndarray:
    """(1 - p)^n in float32 without any correction (kept for comparison)."""
    p32 = np.asarray(p, dtype=np.float32)
    n32 = np.asarray(n, dtype=np.float32)
    return np.power(np.float32(1.0) - p32, n32)


# Acklam's rational approximation of the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _standard_normal_quantile(xi: np.ndarray) -> np.ndarray:
    q = xi - 0.5
    r = q * q
    central = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
               / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # tail formula on the nearer tail, sign restored afterwards
    t = np.sqrt(-2.0 * np.log(np.minimum(xi, 1.0 - xi)))
    tail = ((((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5])
            / ((((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0))
    tail = np.where(q < 0, tail, -tail)
    return np.where(np.abs(q) <= 0.5 - _P_LOW, central, tail)


def inverse_normal_cdf(xi, mu=0.0, sigma2=1.0) -> np.ndarray:
    """Quantile of N(mu, sigma2) at probability ``xi``.

    ``xi`` is clamped into the open unit interval; ``sigma2 <= 0`` returns mu.
    """
    xi = np.clip(np.asarray(xi, dtype=np.float64), _XI_MIN, 1.0 - _XI_MIN)
    sigma = np.sqrt(np.maximum(np.asarray(sigma2, dtype=np.float64), 0.0))
    return np.asarray(mu, dtype=np.float64) + sigma * _standard_normal_quantile(xi)


def sample_binomial_exact(n, p, stream: RandomStream, index) -> np.ndarray:
    """Exact Binomial(n, p) draw by CDF inversion of one stream uniform.

    Reference sampler for validation only; ``n`` must be integral.
    """
    n = np.asarray(n)
    if np.any(n != np.floor(n)) or np.any(n < 0):
        raise ValueError("exact binomial needs a non-negative integer trial count")
    u = stream.uniform(index)
    k = stats.binom.ppf(u, n, p)
    return np.maximum(np.nan_to_num(k, nan=0.0), 0.0)


def single_gated(n, p, xi1, xi2) -> np.ndarray:
    """Gated Gaussian for real-valued trial counts (positive count only).

    The gate fires with probability ``min(n*p, 1 - (1-p)^n)``; a passing gate
    keeps one positive sample and draws the rest from a clamped normal.
    """
    n = np.asarray(n, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    p_gate = np.minimum(n * p, 1.0 - stable_pow_one_minus(p, n).astype(np.float64))
    m = np.maximum(n - 1.0, 0.0)
    g = inverse_normal_cdf(xi2, 1.0 + m * p, m * p * (1.0 - p))
    g = np.clip(g, 1.0, np.maximum(n, 1.0))
    return np.where(np.asarray(xi1) < p_gate, g, 0.0)


class GatingOutcome(NamedTuple):
    """Positive and negative sample counts of one binomial split."""

    n_pos: np.ndarray
    n_neg: np.ndarray


def _clamped_normal_mean(mu, sigma, lo, hi):
    """E[clip(X, lo, hi)] for X ~ N(mu, sigma^2), sigma > 0."""
    def psi(z):
        return z * special.ndtr(z) + np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)

    return lo + sigma * (psi((mu - lo) / sigma) - psi((mu - hi) / sigma))


def dual_gated(n, p, xi1, xi2, integral=False, gaussian="paper") -> GatingOutcome:
    """Dual-gated Gaussian approximation of a Binomial(n, p) split.

    Exact for n in {0, 1, 2}, dithered between those rows for real n < 2, and
    a normal draw clamped to [1, n-1] once at least one positive and one
    negative sample are known.  Evaluated without data-dependent branches.

    ``gaussian`` selects the middle branch:

    * ``"paper"``: mean ``1 + (n-2) p`` and variance ``(n-2) p (1-p)``, i.e. one
      known positive, one known negative and ``n-2`` free trials.  This
      overestimates rare outcomes when ``n p (1-p)`` is small.
    * ``"matched"``: the exact mean and variance of the binomial conditioned
      on ``1 <= k <= n-1``, with the clamped draw rescaled towards the active
      bound so its expectation equals that mean.  ``E[n_pos] = n p`` holds.

    ``integral`` (bool or boolean array) makes the middle branch return an
    integer: rounded for ``"paper"``, stochastically rounded (reusing the
    unused part of ``xi1``) for ``"matched"``.  Integer trial counts then split
    into integers that add up exactly.  ``p`` of exactly 0 or 1 returns
    (0, n) or (n, 0).
    """
    if gaussian not in ("paper", "matched"):
        raise ValueError(f"unknown gaussian variant {gaussian!r}")
    n = np.asarray(n, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    xi1 = np.asarray(xi1, dtype=np.float64)
    q = 1.0 - p

    n2 = np.maximum(2.0, n)
    lam_full = np.clip(n - 1.0, 0.0, 1.0)
    lam_one = np.maximum(0.0, 1.0 - np.abs(1.0 - n))

    pow_pos = np.power(p, n2)
    pow_neg = stable_pow_one_minus(p, n2).astype(np.float64)
    p_all_pos = lam_full * pow_pos
    p_all_neg = lam_full * pow_neg
    p_one_pos = lam_one * p
    p_one_neg = lam_one * q

    m_all_pos = xi1 < p_all_pos
    m_pos_1n = xi1 < p_all_pos + p_one_pos
    # the float32 (1-p)^n can round up to 1 and make the gate intervals
    # overlap; the positive gates win so exactly one branch fires
    m_all_neg = (1.0 - p_all_neg <= xi1) & ~m_pos_1n
    m_neg_1n = (1.0 - p_all_neg - p_one_neg <= xi1) & ~m_pos_1n
    m_gauss = (n > 1.0) & ~m_pos_1n & ~m_neg_1n

    hi = n2 - 1.0
    if gaussian == "paper":
        free = n2 - 2.0
        g = inverse_normal_cdf(xi2, 1.0 + free * p, free * p * q)
        g = np.clip(g, 1.0, hi)
        g = np.where(integral, np.floor(g + 0.5), g)
    else:
        g = _matched_middle(n2, p, q, pow_pos, pow_neg, xi2)
        lo_gate = p_all_pos + p_one_pos
        hi_gate = 1.0 - p_all_neg - p_one_neg
        width = hi_gate - lo_gate
        u = np.clip((xi1 - lo_gate) / np.where(width > 0, width, 1.0), 0.0, 1.0 - 2.0 ** -53)
        g = np.where(integral, np.minimum(np.floor(g + u), hi), g)
    g_bar = n2 - g

    n_pos = m_all_pos * (n2 - 1.0) + m_pos_1n + m_gauss * g
    n_neg = m_all_neg * (n2 - 1.0) + m_neg_1n + m_gauss * g_bar

    n_pos = np.where(p >= 1.0, n, np.where(p <= 0.0, 0.0, n_pos))
    n_neg = np.where(p >= 1.0, 0.0, np.where(p <= 0.0, n, n_neg))
    return GatingOutcome(n_pos, n_neg)


def _matched_middle(n2, p, q, pow_pos, pow_neg, xi2):
    hi = n2 - 1.0
    p_mid = 1.0 - pow_pos - pow_neg
    safe = np.where(p_mid > 1e-12, p_mid, 1.0)
    mean = np.where(p_mid > 1e-12, n2 * (p - pow_pos) / safe, n2 * p)
    mean = np.clip(mean, 1.0, hi)
    second = n2 * p * q + n2 * n2 * (p * p - pow_pos)
    var = np.maximum(np.where(p_mid > 1e-12, second / safe, 0.0) - mean * mean, 0.0)
    sigma = np.sqrt(var)
    g = np.clip(mean + sigma * _standard_normal_quantile(np.clip(xi2, _XI_MIN, 1.0 - _XI_MIN)), 1.0, hi)

    s = np.where(sigma > 0, sigma, 1.0)
    clamped_mean = np.where(sigma > 0, _clamped_normal_mean(mean, s, 1.0, hi), mean)
    # shrink towards whichever bound pushed the clamped mean off target
    down = clamped_mean > mean
    d_lo = clamped_mean - 1.0
    d_hi = hi - clamped_mean
    g_down = 1.0 + (g - 1.0) * (mean - 1.0) / np.where(d_lo > 0, d_lo, 1.0)
    g_up = hi - (hi - g) * (hi - mean) / np.where(d_hi > 0, d_hi, 1.0)
    g = np.where(down, g_down, np.where(d_hi > 0, g_up, g))
    return np.clip(g, 1.0, hi)


def normalize_bins(probs) -> np.ndarray:
    """Clamp to >= 0 and let the last (dummy) bin absorb the slack to 1."""
    probs = np.maximum(np.asarray(probs, dtype=np.float64), 0.0)
    total = probs.sum(axis=-1, keepdims=True)
    over = total > 1.0
    probs = np.where(over, probs / np.where(over, total, 1.0), probs)
    slack = np.maximum(1.0 - probs.sum(axis=-1), 0.0)
    probs = probs.copy()
    probs[..., -1] += slack
    return probs


def sample_multinomial(n, probs, stream: RandomStream, vertex_id=0, node_id_base=0,
                       gaussian="matched") -> np.ndarray:
    """Hierarchical multinomial sample over the bins on the last axis of ``probs``.

    The bins (dummy last) sit at the leaves of a balanced binary tree; each
    internal node splits its count with :func:`dual_gated` using uniforms
    ``stream.uniform(vertex_id, node_id, 0|1)``.  Nodes are numbered heap
    style (root 1) offset by ``node_id_base``.  Integer counts are split
    into integers, so for integer ``n`` the bins sum to ``n`` exactly.
    """
    probs = normalize_bins(probs)
    n = np.asarray(n, dtype=np.float64)
    shape = np.broadcast_shapes(n.shape, probs.shape[:-1], np.shape(vertex_id))
    n = np.broadcast_to(n, shape)
    probs = np.broadcast_to(probs, shape + probs.shape[-1:])
    vertex_id = np.broadcast_to(np.asarray(vertex_id), shape)
    csum = np.concatenate([np.zeros(shape + (1,)), np.cumsum(probs, axis=-1)], axis=-1)
    out = np.zeros(shape + probs.shape[-1:], dtype=np.float64)

    def split(lo: int, hi: int, count: np.ndarray, node: int) -> None:
        if hi - lo == 1:
            out[..., lo] = count
            return
        mid = (lo + hi) // 2
        left = csum[..., mid] - csum[..., lo]
        right = csum[..., hi] - csum[..., mid]
        mass = left + right
        active = (mass > 0) & (count > 0)
        if not np.any(active):
            zero = np.zeros(shape)
            split(lo, mid, zero, 2 * node)
            split(mid, hi, zero, 2 * node + 1)
            return
        p = np.where(mass > 0, left / np.where(mass > 0, mass, 1.0), 0.0)
        node_id = node_id_base + node
        xi1 = stream.uniform(vertex_id, node_id, 0)
        xi2 = stream.uniform(vertex_id, node_id, 1)
        outcome = dual_gated(count, p, xi1, xi2, integral=count == np.floor(count), gaussian=gaussian)
        split(lo, mid, np.where(active, outcome.n_pos, 0.0), 2 * node)
        split(mid, hi, np.where(active, outcome.n_neg, 0.0), 2 * node + 1)

    split(0, probs.shape[-1], n, 1)
    return out


def binomial_pmf(n: int, p: float) -> np.ndarray:
    """Exact Binomial(n, p) probabilities for k = 0..n."""
    return stats.binom.pmf(np.arange(n + 1), n, p)


def total_variation(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    return 0.5 * float(np.abs(a - b).sum())


def empirical_pmf(values, size: int | None = None) -> np.ndarray:
    """Histogram of (rounded) counts normalized to a pmf."""
    k = np.floor(np.asarray(values, dtype=np.float64).ravel() + 0.5).astype(np.int64)
    size = int(k.max()) + 1 if size is None else size
    return np.bincount(k, minlength=size)[:size] / k.size
