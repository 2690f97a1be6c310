import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from glintibl.core_brdf import (AlbedoTables, SurfaceMaterial, d_total_closed_form, d_total_quadrature,
                                d_visible_quadrature, eval_smooth_brdf, ggx_ndf, hammersley, reflect,
                                sample_ggx_half_vector, schlick_fresnel, smith_g, split_sum_quadrature)


def sph(theta, phi):
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


@pytest.mark.parametrize("alpha", [0.05, 0.16, 0.5, 1.0])
def test_ndf_projected_area_is_one(alpha):
    val, _ = integrate.quad(lambda t: ggx_ndf(math.cos(t), alpha) * math.cos(t) * math.sin(t) * 2 * math.pi,
                            0, math.pi / 2, points=[alpha], limit=200)
    assert val == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("alpha", [0.01, 0.16, 0.5, 0.9, 1.0])
def test_total_area_closed_form_matches_quadrature(alpha):
    oracle, _ = integrate.quad(lambda t: ggx_ndf(math.cos(t), alpha) * math.sin(t) * 2 * math.pi,
                               0, math.pi / 2, points=[alpha], limit=400)
    assert float(d_total_closed_form(alpha)) == pytest.approx(oracle, rel=1e-6)
    assert float(d_total_quadrature(alpha)) == pytest.approx(oracle, rel=1e-5)


def test_total_area_limits():
    assert float(d_total_closed_form(1.0)) == pytest.approx(2.0)
    assert float(d_total_closed_form(1e-9)) == pytest.approx(1.0, abs=1e-6)


@given(st.floats(0.0, 1.0), st.floats(0.01, 1.0))
def test_visible_area_bounded_by_total(cos_o, alpha):
    assert float(d_visible_quadrature(cos_o, alpha, 2 ** 12)) <= float(d_total_closed_form(alpha)) * (1 + 1e-9)


@pytest.mark.parametrize("cos_o,alpha", [(1.0, 0.16), (0.5, 0.16), (0.2, 0.5), (0.9, 0.8)])
def test_visible_area_against_brute_force(cos_o, alpha):
    """Dense midpoint rule over the half-vector hemisphere, masking invisible facets directly."""
    n_t, n_p = 2048, 1024
    t = (np.arange(n_t) + 0.5) / n_t * (math.pi / 2)
    p = (np.arange(n_p) + 0.5) / n_p * (2 * math.pi)
    tt, pp = np.meshgrid(t, p, indexing="ij")
    h = sph(tt, pp)
    wo = np.array([math.sqrt(1 - cos_o ** 2), 0.0, cos_o])
    wi = reflect(wo, h)
    ok = (h @ wo > 0) & (wi[..., 2] > 0)
    oracle = np.sum(np.where(ok, ggx_ndf(np.cos(tt), alpha) * np.sin(tt), 0.0)) * (math.pi / 2 / n_t) * (2 * math.pi / n_p)
    assert float(d_visible_quadrature(cos_o, alpha)) == pytest.approx(oracle, rel=2e-3)


def test_fresnel():
    assert schlick_fresnel((0.04, 0.5, 1.0), 1.0).tolist() == pytest.approx([0.04, 0.5, 1.0])
    assert schlick_fresnel((0.04, 0.04, 0.04), 0.0).tolist() == pytest.approx([1.0] * 3)


def test_smith_g_range():
    g = smith_g(np.linspace(0.01, 1, 50), 0.7, 0.3)
    assert np.all((g > 0) & (g <= 1))
    assert float(smith_g(1.0, 1.0, 1e-4)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("cos_o,alpha", [(1.0, 0.16), (0.6, 0.16), (0.3, 0.4), (0.8, 0.9)])
def test_split_sum_matches_brdf_integral(cos_o, alpha):
    """scale + bias is the white-f0 directional albedo; scale alone is the f0 = 0 part."""
    n_t, n_p = 1024, 256
    t = (np.arange(n_t) + 0.5) / n_t * (math.pi / 2)
    p = (np.arange(n_p) + 0.5) / n_p * (2 * math.pi)
    tt, pp = np.meshgrid(t, p, indexing="ij")
    wi = sph(tt, pp)
    wo = np.array([math.sqrt(1 - cos_o ** 2), 0.0, cos_o])
    area = np.sin(tt) * (math.pi / 2 / n_t) * (2 * math.pi / n_p)
    n = np.array([0.0, 0.0, 1.0])
    white = eval_smooth_brdf(wi, wo, n, SurfaceMaterial(alpha, (1.0, 1.0, 1.0)))[..., 0]
    black = eval_smooth_brdf(wi, wo, n, SurfaceMaterial(alpha, (0.0, 0.0, 0.0)))[..., 0]
    scale, bias = split_sum_quadrature(cos_o, alpha)
    assert float(scale + bias) == pytest.approx(float(np.sum(white * area)), rel=0.01)
    assert float(bias) == pytest.approx(float(np.sum(black * area)), rel=0.02)


def test_tables_are_consistent(tables):
    assert np.all(tables.scale + tables.bias <= 1.0 + 1e-6)
    assert np.all(tables.d_visible <= tables.d_total[None, :] * (1 + 1e-9))
    assert float(tables.total_area(1.0)) == pytest.approx(2.0, rel=1e-4)
    albedo = tables.albedo((1.0, 1.0, 1.0), 1.0, 0.16)
    s, b = split_sum_quadrature(1.0, 0.16)
    assert albedo[0] == pytest.approx(float(s + b), rel=5e-3)


def test_tables_roundtrip(tables, tmp_path):
    path = tmp_path / "t.gibl"
    tables.save(path)
    back = AlbedoTables.load(path)
    for name in ("d_total", "d_visible", "scale", "bias"):
        assert np.array_equal(getattr(back, name), getattr(tables, name))
    (tmp_path / "bad.gibl").write_bytes(b"nope")
    with pytest.raises(ValueError):
        AlbedoTables.load(tmp_path / "bad.gibl")


def test_hammersley():
    pts = hammersley(16)
    assert pts.shape == (16, 2)
    assert sorted(pts[:, 1].tolist()) == pytest.approx(np.arange(16) / 16)


def test_ggx_sampling_distribution():
    pts = hammersley(1 << 16)
    h = sample_ggx_half_vector(pts[:, 0], pts[:, 1], 0.3)
    assert np.allclose(np.linalg.norm(h, axis=-1), 1.0)
    # projected NDF: P(cos^2 >= c) in closed form
    c = 0.9
    a2 = 0.09
    u = (1.0 - c) / (1.0 - c + a2 * c)  # u1 at which cos^2 = c
    assert np.mean(h[:, 2] ** 2 >= c) == pytest.approx(u, abs=1e-3)


def test_material_validation():
    with pytest.raises(ValueError):
        SurfaceMaterial(alpha=0.0)
    with pytest.raises(ValueError):
        SurfaceMaterial(f0=(1.2, 0, 0))
    with pytest.raises(ValueError):
        SurfaceMaterial(density_scale=0)
    m = SurfaceMaterial.from_sqrt_alpha(0.4, log_n0=2.0, density_scale=3.0)
    assert m.alpha == pytest.approx(0.16)
    assert m.density == pytest.approx(3 * math.exp(2.0))
