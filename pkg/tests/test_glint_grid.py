import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glintibl.core_brdf import SurfaceMaterial
from glintibl.glint_grid import (AREA_MIN, Footprint, aggregate_modulation, aggregate_single_bin, draw_counts,
                                 footprint_from_ray, grid_vertices)


def test_footprint_from_axis_aligned_jacobian():
    fp = footprint_from_ray(np.array([0.2, 0.0]), np.array([0.0, 0.05]))
    assert fp.major_len == pytest.approx(0.2)
    assert fp.minor_len == pytest.approx(0.05)
    assert fp.area == pytest.approx(math.pi / 4 * 0.01)
    assert fp.anisotropy == pytest.approx(4.0)


def test_footprint_degenerate_is_minimal():
    fp = footprint_from_ray(np.zeros(2), np.zeros(2))
    assert fp.area == pytest.approx(AREA_MIN)
    assert np.isfinite(fp.major_len) and np.isfinite(fp.minor_len)


def test_footprint_area_capped():
    fp = footprint_from_ray(np.array([10.0, 0.0]), np.array([0.0, 10.0]))
    assert fp.area == 1.0


def _footprint(u, v, size):
    return Footprint(np.array([u, v]), np.asarray(size), np.asarray(size), np.asarray(0.0),
                     np.asarray(math.pi / 4 * size * size))


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1e-4, 0.9))
def test_vertex_weights_partition_of_unity(u, v, size):
    verts = grid_vertices(_footprint(u, v, size), SurfaceMaterial())
    assert verts.weights.shape == (6,)
    assert verts.weights.sum() == pytest.approx(1.0)
    assert np.all(verts.weights >= -1e-12)


def test_vertex_seeds_are_surface_anchored():
    mat = SurfaceMaterial()
    a = grid_vertices(_footprint(0.301, 0.402, 0.01), mat, seed=5)
    b = grid_vertices(_footprint(0.302, 0.4015, 0.01), mat, seed=5)
    # nearby footprints in the same triangles share lattice vertices and seeds
    assert np.array_equal(a.lattice, b.lattice)
    assert np.array_equal(a.seeds, b.seeds)
    c = grid_vertices(_footprint(0.301, 0.402, 0.01), mat, seed=6)
    assert not np.array_equal(a.seeds, c.seeds)


def test_expected_count():
    mat = SurfaceMaterial(log_n0=10.0, density_scale=2.0)
    verts = grid_vertices(_footprint(0, 0, 0.01), mat)
    assert float(verts.expected_count) == pytest.approx(2 * math.exp(10) * math.pi / 4 * 1e-4)
    assert np.allclose(verts.counts, verts.expected_count)


def _many(size, count, mat):
    rng = np.random.default_rng(0)
    uv = rng.uniform(-100, 100, (count, 2))
    fp = Footprint(uv, np.full(count, size), np.full(count, size), np.zeros(count),
                   np.full(count, math.pi / 4 * size * size))
    return grid_vertices(fp, mat)


def test_counts_conserve_per_vertex():
    # real-valued counts: tree nodes below 2 dither, so totals hold on average
    mat = SurfaceMaterial(log_n0=10.0)
    verts = _many(0.02, 20000, mat)
    probs = np.tile([0.1, 0.2, 0.3], (20000, 1))
    counts = draw_counts(verts, probs)
    assert counts.shape == (20000, 6, 4)
    assert np.all(counts >= 0)
    total = counts.sum(axis=-1)
    assert total.mean() == pytest.approx(verts.counts.mean(), rel=0.01)
    assert counts[..., :-1].sum(axis=(0, 1)) / total.sum() == pytest.approx([0.1, 0.2, 0.3], rel=0.02)


@pytest.mark.parametrize("log_n0", [6.0, 10.0, 16.0])
def test_modulation_is_unbiased(log_n0):
    mat = SurfaceMaterial(log_n0=log_n0)
    verts = _many(0.02, 40000, mat)
    levels = np.array([0.0, 0.2, 1.0, 5.0])
    probs = np.tile([0.1, 0.2, 0.15, 0.05], (40000, 1))
    mod = aggregate_modulation(verts, levels, probs)
    assert np.all(mod >= 0)
    assert mod.mean() == pytest.approx(1.0, abs=4 * mod.std() / math.sqrt(mod.size) + 0.005)


def test_modulation_zero_when_nothing_reflects():
    verts = _many(0.02, 10, SurfaceMaterial())
    mod = aggregate_modulation(verts, np.array([0.0, 1.0]), np.zeros((10, 2)))
    assert np.all(mod == 0)


def test_single_bin_is_unbiased():
    verts = _many(0.02, 40000, SurfaceMaterial(log_n0=8.0))
    mod = aggregate_single_bin(verts, np.full(40000, 0.1))
    assert mod.mean() == pytest.approx(1.0, abs=4 * mod.std() / math.sqrt(mod.size) + 0.005)


def test_modulation_converges_at_high_density():
    verts = _many(0.02, 200, SurfaceMaterial(log_n0=30.0))
    mod = aggregate_modulation(verts, np.array([0.0, 1.0, 4.0]), np.tile([0.2, 0.3, 0.1], (200, 1)))
    assert np.max(np.abs(mod - 1.0)) < 0.01
