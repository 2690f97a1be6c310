"""Pixel footprints, the two-level triangle lattice and per-vertex multinomial aggregation.

Each footprint is spread over 6 lattice vertices: the corners of the
triangle containing its centre on the two dyadic lattices bracketing its
size.  Every vertex carries a deterministic seed, so a glint belongs to the
surface rather than to the pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_brdf import SurfaceMaterial
from .counting import dual_gated, sample_multinomial
from .rng import RandomStream, hash_indices

AREA_MIN = 1e-12
LATTICE_WRAP = 1 << 20
VERTICES_PER_FOOTPRINT = 6
# keeps lattice-vertex seeds and tree-node streams apart
_TREE_SALT = 0x51ED2701


@dataclass
class Footprint:
    """Elliptic uv footprint(s); all fields broadcast over pixels."""

    center_uv: np.ndarray
    major_len: np.ndarray
    minor_len: np.ndarray
    orientation: np.ndarray
    area: np.ndarray

    @property
    def anisotropy(self) -> np.ndarray:
        return self.major_len / self.minor_len


def footprint_from_ray(duv_dx, duv_dy, center_uv=None) -> Footprint:
    """Footprint from the uv derivatives per pixel (singular values of the Jacobian).

    ``area = pi/4 * major * minor`` clamped to [1e-12, 1]; a zero Jacobian
    yields the minimal footprint.
    """
    dx = np.asarray(duv_dx, dtype=np.float64)
    dy = np.asarray(duv_dy, dtype=np.float64)
    jac = np.stack([dx, dy], axis=-1)  # columns are the two derivatives
    u_vec, sing, _ = np.linalg.svd(jac)
    major, minor = sing[..., 0], sing[..., 1]
    orientation = np.arctan2(u_vec[..., 1, 0], u_vec[..., 0, 0])
    floor_len = np.sqrt(4.0 * AREA_MIN / np.pi)
    bad = ~np.isfinite(major) | (major <= 0)
    major = np.where(bad, floor_len, major)
    minor = np.where(bad, floor_len, np.maximum(minor, AREA_MIN / np.maximum(major, floor_len)))
    area = np.clip(0.25 * np.pi * major * minor, AREA_MIN, 1.0)
    if center_uv is None:
        center_uv = np.zeros(dx.shape)
    return Footprint(np.asarray(center_uv, dtype=np.float64), major, minor, orientation, area)


@dataclass
class GridVertices:
    """Six weighted lattice vertices per footprint, arrays of shape (..., 6)."""

    weights: np.ndarray
    seeds: np.ndarray
    counts: np.ndarray
    lattice: np.ndarray  # (..., 6, 3) integer (x, y, lod)
    expected_count: np.ndarray  # (...,) E[N_P]


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _triangle(uv: np.ndarray, spacing: np.ndarray):
    """Corners (integer lattice coords) and barycentric weights of the containing triangle."""
    p = uv / spacing[..., None]
    cell = np.floor(p)
    f = p - cell
    fx, fy = f[..., 0], f[..., 1]
    upper = fx >= fy
    one = np.ones_like(fx)
    zero = np.zeros_like(fx)
    # lower-right triangle (0,0),(1,0),(1,1) or upper-left (0,0),(0,1),(1,1)
    c1 = np.stack([np.where(upper, one, zero), np.where(upper, zero, one)], axis=-1)
    bary = np.stack([1.0 - np.where(upper, fx, fy), np.abs(fx - fy), np.where(upper, fy, fx)], axis=-1)
    corners = np.stack([cell, cell + c1, cell + 1.0], axis=-2).astype(np.int64)
    return corners, bary


def grid_vertices(fp: Footprint, material: SurfaceMaterial, seed: int = 0) -> GridVertices:
    """Spread a footprint over 6 vertices of the two LOD lattices bracketing its size."""
    lod_f = np.log2(np.maximum(fp.major_len, 1e-300))
    lod0 = np.floor(lod_f)
    blend = _smoothstep(lod_f - lod0)
    corners, weights, lods = [], [], []
    for offset, lod_weight in ((0, 1.0 - blend), (1, blend)):
        lod = lod0 + offset
        c, b = _triangle(fp.center_uv, np.exp2(lod))
        corners.append(c)
        weights.append(b * lod_weight[..., None])
        lods.append(np.broadcast_to(lod[..., None], b.shape))
    corners = np.concatenate(corners, axis=-2)
    weights = np.concatenate(weights, axis=-1)
    lods = np.concatenate(lods, axis=-1).astype(np.int64)
    wrapped = np.mod(corners, LATTICE_WRAP)
    seeds = hash_indices(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), wrapped[..., 0], wrapped[..., 1], lods)
    expected = material.density * fp.area
    counts = np.broadcast_to(expected[..., None], weights.shape).copy()
    lattice = np.concatenate([wrapped, lods[..., None]], axis=-1)
    return GridVertices(weights, seeds, counts, lattice, np.asarray(expected))


def draw_counts(vertices: GridVertices, probs) -> np.ndarray:
    """Multinomial bin counts per vertex, shape (..., 6, K+1); the dummy bin is last.

    ``probs`` holds the K reflecting probabilities per footprint, shape (..., K).
    """
    probs = np.asarray(probs, dtype=np.float64)
    full = np.concatenate([probs, np.zeros(probs.shape[:-1] + (1,))], axis=-1)
    full = np.broadcast_to(full[..., None, :], vertices.weights.shape + full.shape[-1:])
    return sample_multinomial(vertices.counts, full, RandomStream(_TREE_SALT), vertex_id=vertices.seeds)


def aggregate_modulation(vertices: GridVertices, level_radiances, probs, expected_count=None) -> np.ndarray:
    """Weighted multinomial radiance over its expectation; 0 where nothing reflects."""
    level_radiances = np.asarray(level_radiances, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    e_np = vertices.expected_count if expected_count is None else np.asarray(expected_count, dtype=np.float64)
    counts = draw_counts(vertices, probs)
    radiance = np.sum(counts[..., :-1] * level_radiances, axis=-1)
    numer = np.sum(vertices.weights * radiance, axis=-1)
    denom = e_np * np.sum(probs * level_radiances, axis=-1)
    return np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), 0.0)


def aggregate_single_bin(vertices: GridVertices, p, expected_count=None) -> np.ndarray:
    """One-bin variant: weighted dual-gated positive count over E[N_P]·p."""
    p = np.asarray(p, dtype=np.float64)
    e_np = vertices.expected_count if expected_count is None else np.asarray(expected_count, dtype=np.float64)
    stream = RandomStream(_TREE_SALT)
    xi1 = stream.uniform(vertices.seeds, 1, 0)
    xi2 = stream.uniform(vertices.seeds, 1, 1)
    n = vertices.counts
    pb = np.broadcast_to(p[..., None], n.shape)
    out = dual_gated(n, pb, xi1, xi2, integral=n == np.floor(n), gaussian="matched")
    numer = np.sum(vertices.weights * out.n_pos, axis=-1)
    denom = e_np * p
    return np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), 0.0)
