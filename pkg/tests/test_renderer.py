import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glintibl.core_brdf import SurfaceMaterial
from glintibl.renderer import (REFERENCE_CAP, Camera, PreparedFrame, Scene, ShadeMode, camera_rays,
                               const_p_probability, furnace_inputs, glint_fraction, glint_mask, lum709, mask_change,
                               reflection_probs, render, sample_unprojected_ndf, tonemap_write, trace,
                               unprojected_ndf_cdf, with_density)
from glintibl.core_brdf import d_total_closed_form, ggx_ndf

SMALL = Camera(width=32, height=32)


def test_validation():
    with pytest.raises(ValueError):
        Camera(width=8)
    with pytest.raises(ValueError):
        Scene(geometry="torus")
    with pytest.raises(ValueError):
        ShadeMode("sparkle")
    with pytest.raises(ValueError):
        ShadeMode("const_p", gamma_deg=0.0)
    with pytest.raises(ValueError):
        ShadeMode(realizations=0)


def test_camera_ray_derivatives_match_finite_differences():
    cam = Camera(width=20, height=20)
    _, d, ddx, ddy = camera_rays(cam)
    assert np.allclose(d[5, 6] - d[5, 5], ddx[5, 5], atol=2e-3)
    assert np.allclose(d[6, 5] - d[5, 5], ddy[5, 5], atol=2e-3)


def test_sphere_hits():
    hits = trace(Scene(camera=SMALL))
    assert hits.mask[16, 16] and not hits.mask[0, 0]
    assert np.allclose(np.linalg.norm(hits.position, axis=-1), 1.0)
    assert np.allclose(hits.normal, hits.position)


def test_sphere_uv_derivatives_match_neighbours():
    scene = Scene(camera=Camera(width=64, height=64))
    hits = trace(scene)
    flat = np.full((64 * 64, 2), np.nan)
    flat[hits.index] = hits.uv
    uv = flat.reshape(64, 64, 2)
    dx = np.full((64 * 64, 2), np.nan)
    dx[hits.index] = hits.duv_dx
    dx = dx.reshape(64, 64, 2)
    assert np.allclose(uv[30, 21] - uv[30, 20], dx[30, 20], rtol=0.05, atol=1e-4)


def test_plane_geometry():
    cam = Camera(position=(0.0, 2.0, 3.0), look_at=(0.0, 0.0, 0.0), width=16, height=16)
    hits = trace(Scene(geometry="plane", camera=cam))
    assert np.allclose(hits.position[:, 1], 0.0, atol=1e-9)
    assert np.allclose(hits.normal, [0.0, 1.0, 0.0])


def test_const_p_probability():
    assert const_p_probability(90.0, 0.3) == pytest.approx(1.0)
    # the cone mass is the projected-NDF CDF in cos^2
    g, a = math.radians(5.0), 0.16
    c2 = math.cos(g) ** 2
    assert const_p_probability(5.0, a) == pytest.approx((1 - c2) / (1 - c2 + a * a * c2))


def test_reflection_probs_bounded(tables):
    w = np.random.default_rng(0).dirichlet(np.ones(5), size=100)
    p = reflection_probs(np.linspace(0, 1, 100), 0.16, w, tables)
    assert np.all(p >= 0) and np.all(p.sum(axis=-1) <= 1.0 + 1e-12)


@given(st.floats(0.02, 1.0))
def test_unprojected_cdf_endpoints(alpha):
    assert float(unprojected_ndf_cdf(0.0, alpha)) == pytest.approx(0.0, abs=1e-12)
    assert float(unprojected_ndf_cdf(1.0, alpha)) == pytest.approx(1.0, rel=1e-9)


def test_unprojected_sampling_matches_ndf():
    alpha = 0.16
    u = (np.arange(200000) + 0.5) / 200000
    h = sample_unprojected_ndf(u, np.random.default_rng(0).random(u.size), alpha)
    edges = np.linspace(0, math.pi / 2, 11)
    theta = np.arccos(h[:, 2])
    hist = np.histogram(theta, edges)[0] / u.size
    t = np.linspace(0, math.pi / 2, 20001)
    dens = ggx_ndf(np.cos(t), alpha) * np.sin(t) * 2 * math.pi / float(d_total_closed_form(alpha))
    cdf = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
    expected = np.diff(np.interp(edges, t, cdf))
    assert np.allclose(hist, expected, atol=2e-3)


def test_render_modes_shapes(small_env, tables):
    env, penv = small_env
    scene = Scene(camera=SMALL)
    for kind in ("smooth", "glint", "const_p", "furnace"):
        img = render(scene, ShadeMode(kind), penv, tables, seed=1)
        assert img.rgb.shape == (32, 32, 3)
        assert np.all(np.isfinite(img.rgb)) and np.all(img.rgb >= 0)
    sparse = Scene(camera=SMALL, material=SurfaceMaterial.from_sqrt_alpha(0.4, log_n0=10.0))
    img = render(sparse, ShadeMode("reference"), penv, tables, env, seed=1)
    assert np.all(np.isfinite(img.rgb))


def test_seed_changes_glints_not_smooth(small_env, tables):
    _, penv = small_env
    scene = Scene(camera=SMALL)
    a = render(scene, ShadeMode("glint"), penv, tables, seed=1)
    b = render(scene, ShadeMode("glint"), penv, tables, seed=2)
    assert not np.array_equal(a.rgb, b.rgb)
    s1 = render(scene, ShadeMode("smooth"), penv, tables, seed=1)
    s2 = render(scene, ShadeMode("smooth"), penv, tables, seed=2)
    assert np.array_equal(s1.rgb, s2.rgb)


def test_background_unchanged_by_mode(small_env, tables):
    _, penv = small_env
    scene = Scene(camera=SMALL)
    s = render(scene, ShadeMode("smooth"), penv, tables)
    g = render(scene, ShadeMode("glint"), penv, tables, seed=3)
    assert np.array_equal(s.rgb[~s.mask], g.rgb[~g.mask])


def test_reference_refuses_dense_surfaces(small_env, tables):
    env, penv = small_env
    scene = Scene(camera=SMALL, material=SurfaceMaterial.from_sqrt_alpha(0.4, log_n0=30.0))
    with pytest.raises(ValueError, match="desk-scale cap"):
        render(scene, ShadeMode("reference"), penv, tables, env)
    assert REFERENCE_CAP == 1e4


def test_reference_needs_env(small_env, tables):
    _, penv = small_env
    with pytest.raises(ValueError):
        render(Scene(camera=SMALL), ShadeMode("reference"), penv, tables)


def test_threads_do_not_change_result(small_env, tables):
    _, penv = small_env
    scene = Scene(camera=Camera(width=96, height=96))
    a = render(scene, ShadeMode("glint"), penv, tables, seed=4, threads=1)
    b = render(scene, ShadeMode("glint"), penv, tables, seed=4, threads=4)
    assert a.rgb.tobytes() == b.rgb.tobytes()


def test_furnace_smooth_equals_split_sum(tables):
    env, penv = furnace_inputs(4, samples=64)
    frame = PreparedFrame(Scene(camera=SMALL), penv, tables, env)
    expect = tables.albedo((1.0, 1.0, 1.0), frame.cos_o, 0.16)
    assert np.allclose(frame.smooth, expect, rtol=1e-3)


def test_reference_expectation_in_furnace(tables):
    """Under a white environment E[s] is the visible share of facets, E_D / D_H."""
    env, penv = furnace_inputs(4, samples=64)
    frame = PreparedFrame(Scene(camera=SMALL), penv, tables, env)
    ratio = tables.visible_area(frame.cos_o, 0.16) / tables.total_area(0.16)
    assert np.allclose(frame.reference_expectation(4096), ratio, atol=5e-3)


def test_mask_helpers():
    smooth = np.full((4, 3), 0.5)
    img = smooth.copy()
    img[0] *= 3
    assert glint_fraction(img, smooth) == pytest.approx(0.25)
    assert glint_mask(img, smooth).tolist() == [True, False, False, False]
    assert mask_change(np.zeros(3, bool), np.zeros(3, bool)) == 0.0
    assert mask_change(np.array([1, 1, 0], bool), np.array([0, 1, 1], bool)) == pytest.approx(2 / 3)
    assert lum709([1.0, 1.0, 1.0]) == pytest.approx(1.0)


def test_tonemap_write(small_env, tables, tmp_path):
    _, penv = small_env
    img = render(Scene(camera=SMALL), ShadeMode("smooth"), penv, tables)
    tonemap_write(img, 0.0, tmp_path / "a.png")
    tonemap_write(img, 0.0, tmp_path / "a.pfm")
    with pytest.raises(ValueError):
        tonemap_write(img, 0.0, tmp_path / "a.jpg")


def test_with_density():
    s = with_density(Scene(), 3.0)
    assert s.material.density_scale == 3.0
