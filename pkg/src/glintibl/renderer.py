"""Analytic-scene renderer: smooth split-sum IBL, glint IBL, constant-probability glints
and an explicit-microfacet reference.

A :class:`PreparedFrame` traces the scene and evaluates everything that does
not depend on the random seed (footprints, smooth shading, reflection
probabilities) once; each realization then only redraws microfacet counts.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core_brdf import AlbedoTables, SurfaceMaterial, hammersley, load_albedo_tables
from .envmap import (EnvironmentMap, PrefilteredEnv, constant_env, compute_levels, orthonormal_basis,
                     prefilter, rotate_y, sample_prefiltered)
from .glint_grid import aggregate_modulation, aggregate_single_bin, footprint_from_ray, grid_vertices
from .imageio import write_pfm, write_png
from .rng import RandomStream

MODES = ("smooth", "glint", "const_p", "reference", "furnace")
REFERENCE_CAP = 1e4
PIXEL_CHUNK = 4096
_REF_SALT = 0x7EF0_0D5E


def lum709(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.2126 * rgb[..., 0] + 0.7152 * rgb[..., 1] + 0.0722 * rgb[..., 2]


@dataclass(frozen=True)
class Camera:
    position: tuple = (0.0, 0.0, 3.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    vfov_deg: float = 45.0
    width: int = 128
    height: int = 128

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("resolution must be at least 16x16")
        if not 1.0 < self.vfov_deg < 179.0:
            raise ValueError("vertical field of view must lie in (1, 179) degrees")


@dataclass(frozen=True)
class Scene:
    """Unit sphere at the origin or the ground plane y = 0 under an environment.

    ``uv_scale`` converts surface coordinates to uv units; one uv unit square
    holds ``material.density`` microfacets.  Sphere uv is (azimuth, polar
    angle) in radians times ``uv_scale``; plane uv is (x, z) times ``uv_scale``.
    """

    geometry: str = "sphere"
    camera: Camera = field(default_factory=Camera)
    env_rotation_deg: float = 0.0
    material: SurfaceMaterial = field(default_factory=SurfaceMaterial)
    uv_scale: float = 0.13

    def __post_init__(self):
        if self.geometry not in ("sphere", "plane"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if not self.uv_scale > 0:
            raise ValueError("uv_scale must be positive")


@dataclass(frozen=True)
class ShadeMode:
    kind: str = "glint"
    gamma_deg: float = 3.0
    realizations: int = 1

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown shading mode {self.kind!r}; expected one of {MODES}")
        if self.kind == "const_p" and not 0.0 < self.gamma_deg <= 90.0:
            raise ValueError("gamma must lie in (0, 90] degrees")
        if self.realizations < 1:
            raise ValueError("need at least one realization")


@dataclass
class ImageBuffer:
    rgb: np.ndarray
    mask: np.ndarray

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


# geometry --------------------------------------------------------------------

def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def camera_rays(cam: Camera):
    """Ray directions per pixel and their derivatives along +x and +y pixels."""
    pos = np.asarray(cam.position, dtype=np.float64)
    fwd = _normalize(np.asarray(cam.look_at, dtype=np.float64) - pos)
    right = _normalize(np.cross(fwd, np.asarray(cam.up, dtype=np.float64)))
    up = np.cross(right, fwd)
    th = math.tan(math.radians(cam.vfov_deg) / 2.0)
    aspect = cam.width / cam.height
    x = (2.0 * (np.arange(cam.width) + 0.5) / cam.width - 1.0) * th * aspect
    y = (1.0 - 2.0 * (np.arange(cam.height) + 0.5) / cam.height) * th
    raw = fwd + x[None, :, None] * right + y[:, None, None] * up
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    d = raw / norm
    # derivative of normalize(raw) along each pixel step
    step_x = right * (2.0 * th * aspect / cam.width)
    step_y = -up * (2.0 * th / cam.height)
    ddx = (step_x - d * np.sum(d * step_x, axis=-1, keepdims=True)) / norm
    ddy = (step_y - d * np.sum(d * step_y, axis=-1, keepdims=True)) / norm
    return np.broadcast_to(pos, d.shape), d, ddx, ddy


@dataclass
class Hits:
    mask: np.ndarray  # (H, W)
    index: np.ndarray  # flat indices of foreground pixels
    ray_dir: np.ndarray  # (H, W, 3)
    position: np.ndarray  # (n, 3) for foreground pixels only
    normal: np.ndarray
    uv: np.ndarray
    duv_dx: np.ndarray
    duv_dy: np.ndarray


def trace(scene: Scene) -> Hits:
    origin, d, ddx, ddy = camera_rays(scene.camera)
    h, w = d.shape[:2]
    o = origin.reshape(-1, 3)
    dd = d.reshape(-1, 3)
    if scene.geometry == "sphere":
        b = np.sum(o * dd, axis=-1)
        c = np.sum(o * o, axis=-1) - 1.0
        disc = b * b - c
        t = -b - np.sqrt(np.maximum(disc, 0.0))
        hit = (disc > 0) & (t > 1e-9)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -o[:, 1] / dd[:, 1]
        hit = np.isfinite(t) & (t > 1e-9)
    idx = np.nonzero(hit)[0]
    t = t[idx]
    dir_h = dd[idx]
    p = o[idx] + t[:, None] * dir_h
    if scene.geometry == "sphere":
        n = _normalize(p)
    else:
        n = np.broadcast_to(np.array([0.0, 1.0, 0.0]), p.shape).copy()
    dn = np.sum(dir_h * n, axis=-1, keepdims=True)

    def dp(dd_pix):
        # transfer of a ray-direction differential to the surface
        dd_pix = dd_pix.reshape(-1, 3)[idx]
        tmp = t[:, None] * dd_pix
        return tmp - dir_h * np.sum(tmp * n, axis=-1, keepdims=True) / dn

    dpx, dpy = dp(ddx), dp(ddy)
    s = scene.uv_scale
    if scene.geometry == "sphere":
        rho2 = np.maximum(p[:, 0] ** 2 + p[:, 2] ** 2, 1e-12)
        uv = np.stack([np.arctan2(p[:, 0], p[:, 2]), np.arccos(np.clip(p[:, 1], -1.0, 1.0))], axis=-1) * s
        sin_t = np.sqrt(rho2)

        def duv(v):
            dphi = (p[:, 2] * v[:, 0] - p[:, 0] * v[:, 2]) / rho2
            dtheta = -v[:, 1] / sin_t
            return np.stack([dphi, dtheta], axis=-1) * s
    else:
        uv = p[:, [0, 2]] * s

        def duv(v):
            return v[:, [0, 2]] * s
    mask = np.zeros(h * w, dtype=bool)
    mask[idx] = True
    return Hits(mask.reshape(h, w), idx, d, p, n, uv, duv(dpx), duv(dpy))


# shading ---------------------------------------------------------------------

def const_p_probability(gamma_deg: float, alpha: float) -> float:
    """Projected GGX half-vector mass inside a cone of half-angle gamma about n."""
    g = math.radians(gamma_deg)
    s2, c2 = math.sin(g) ** 2, math.cos(g) ** 2
    return min(1.0, s2 / ((alpha * alpha - 1.0) * c2 + 1.0))


def reflection_probs(cos_o, alpha, weights, tables: AlbedoTables) -> np.ndarray:
    """p_k = E_D(cos_o, alpha)·w_k / D_H(alpha), scaled down if the sum exceeds 1."""
    ratio = tables.visible_area(cos_o, alpha) / tables.total_area(alpha)
    p = np.asarray(weights, dtype=np.float64) * np.asarray(ratio)[..., None]
    total = p.sum(axis=-1, keepdims=True)
    return np.where(total > 1.0, p / np.where(total > 1.0, total, 1.0), p)


def unprojected_ndf_cdf(v, alpha):
    """CDF in v of the unprojected GGX density 2 sqrt(a^2 + (1-a^2) v^2) / D_H."""
    a = max(float(alpha), 1e-6)
    b = max(1.0 - a * a, 0.0)
    v = np.asarray(v, dtype=np.float64)
    root = np.sqrt(a * a + b * v * v)
    tail = (a * a / math.sqrt(b)) * np.arcsinh(math.sqrt(b) * v / a) if b > 1e-12 else v
    total = 1.0 + ((a * a / math.sqrt(b)) * math.asinh(math.sqrt(b) / a) if b > 1e-12 else 1.0)
    return (v * root + tail) / total


def sample_unprojected_ndf(u1, u2, alpha, table_size: int = 4097) -> np.ndarray:
    """Local (z-up) half-vectors distributed as D(h)/D_H by tabulated CDF inversion."""
    grid = np.linspace(0.0, 1.0, table_size)
    v = np.interp(u1, unprojected_ndf_cdf(grid, alpha), grid)
    a2 = alpha * alpha
    ct = v / np.sqrt(a2 + (1.0 - a2) * v * v)
    st = np.sqrt(np.maximum(1.0 - ct * ct, 0.0))
    phi = 2.0 * np.pi * np.asarray(u2)
    return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)


def _to_world(local, n):
    t, b = orthonormal_basis(n)
    return t * local[..., 0:1] + b * local[..., 1:2] + n * local[..., 2:3]


def _reflected_luminance(env: EnvironmentMap, wo, n, h_world, rotation):
    """Env luminance seen through microfacet h, 0 when invisible or below the horizon."""
    hv = np.sum(h_world * wo, axis=-1)
    wi = 2.0 * hv[..., None] * h_world - wo
    ok = (hv > 0) & (np.sum(wi * n, axis=-1) > 0)
    lum = lum709(env.lookup(rotate_y(wi, -rotation)))
    return np.where(ok, lum, 0.0)


class PreparedFrame:
    """Seed-independent state of one frame: hits, footprints, smooth shading, probabilities."""

    def __init__(self, scene: Scene, penv: PrefilteredEnv, tables: AlbedoTables | None = None,
                 env: EnvironmentMap | None = None, threads: int = 1):
        self.scene = scene
        self.penv = penv
        self.env = env
        self.tables = tables if tables is not None else load_albedo_tables()
        self.threads = max(1, int(threads))
        self.rotation = math.radians(scene.env_rotation_deg)
        mat = scene.material
        hits = trace(scene)
        self.hits = hits
        self.wo = -hits.ray_dir.reshape(-1, 3)[hits.index]
        n = hits.normal
        self.cos_o = np.clip(np.sum(self.wo * n, axis=-1), 0.0, 1.0)
        wr = 2.0 * self.cos_o[:, None] * n - self.wo
        rgb, weights = sample_prefiltered(penv, rotate_y(wr, -self.rotation), mat.alpha)
        albedo = self.tables.albedo(mat.f0, self.cos_o, mat.alpha)
        self.smooth = albedo * rgb
        self.weights = weights
        self.probs = reflection_probs(self.cos_o, mat.alpha, weights, self.tables)
        self.levels = np.asarray(penv.levels.levels, dtype=np.float64)
        self.footprint = footprint_from_ray(hits.duv_dx, hits.duv_dy, hits.uv)
        self.expected_count = mat.density * self.footprint.area
        bg = rotate_y(hits.ray_dir.reshape(-1, 3), -self.rotation)
        self.background = (env.lookup(bg) if env is not None else sample_prefiltered(penv, bg, 0.0)[0])
        self._ref_expectation = None

    @property
    def pixel_count(self) -> int:
        return len(self.hits.index)

    def _chunked(self, fn) -> np.ndarray:
        spans = [(s, min(s + PIXEL_CHUNK, self.pixel_count)) for s in range(0, self.pixel_count, PIXEL_CHUNK)]
        if self.threads == 1 or len(spans) == 1:
            parts = [fn(a, b) for a, b in spans]
        else:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(lambda ab: fn(*ab), spans))
        return np.concatenate(parts) if parts else np.zeros(0)

    # modulation per mode ------------------------------------------------------

    def glint_modulation(self, seed: int) -> np.ndarray:
        mat = self.scene.material

        def run(a, b):
            fp = _slice_footprint(self.footprint, a, b)
            verts = grid_vertices(fp, mat, seed)
            return aggregate_modulation(verts, self.levels, self.probs[a:b])
        return self._chunked(run)

    def const_p_modulation(self, seed: int, gamma_deg: float) -> np.ndarray:
        mat = self.scene.material
        p = const_p_probability(gamma_deg, mat.alpha)

        def run(a, b):
            verts = grid_vertices(_slice_footprint(self.footprint, a, b), mat, seed)
            return aggregate_single_bin(verts, np.full(b - a, p))
        return self._chunked(run)

    def reference_expectation(self, samples: int = 4096) -> np.ndarray:
        """E[s] for one microfacet drawn from D/D_H, per pixel, by quasi-Monte Carlo."""
        if self._ref_expectation is None or self._ref_expectation[0] != samples:
            self._require_env()
            pts = hammersley(samples)
            local = sample_unprojected_ndf(pts[:, 0], pts[:, 1], self.scene.material.alpha)
            n = self.hits.normal
            step = max(1, (1 << 20) // samples)

            def run(a, b):
                out = np.zeros(b - a)
                for s in range(a, b, step):
                    e = min(s + step, b)
                    nn = n[s:e, None, :]
                    hw = _to_world(local[None], np.broadcast_to(nn, (e - s, samples, 3)))
                    lum = _reflected_luminance(self.env, self.wo[s:e, None, :], nn, hw, self.rotation)
                    out[s - a:e - a] = lum.mean(axis=-1)
                return out
            self._ref_expectation = (samples, self._chunked(run))
        return self._ref_expectation[1]

    def _require_env(self):
        if self.env is None:
            raise ValueError("reference mode needs the source environment map")

    def check_reference_cap(self):
        worst = float(self.expected_count.max()) if self.pixel_count else 0.0
        if worst > REFERENCE_CAP:
            raise ValueError(f"reference renderer refused: expected microfacet count {worst:.3g} per footprint "
                             f"exceeds the desk-scale cap of {REFERENCE_CAP:.0f}")

    def reference_modulation(self, seed: int, expectation_samples: int = 4096) -> np.ndarray:
        """Explicit microfacets per lattice vertex: sum of reflected luminance over its expectation."""
        self.check_reference_cap()
        expect = self.reference_expectation(expectation_samples)
        mat = self.scene.material

        def run(a, b):
            verts = grid_vertices(_slice_footprint(self.footprint, a, b), mat, seed)
            stream = RandomStream(_REF_SALT)
            counts = np.floor(verts.counts + stream.uniform(verts.seeds, -1, 0)).astype(np.int64)
            flat_counts = counts.ravel()
            owner = np.repeat(np.arange(flat_counts.size), flat_counts)
            first = np.repeat(np.cumsum(flat_counts) - flat_counts, flat_counts)
            facet = np.arange(owner.size) - first
            seeds = verts.seeds.ravel()[owner]
            local = sample_unprojected_ndf(stream.uniform(seeds, facet, 1), stream.uniform(seeds, facet, 2),
                                           mat.alpha)
            pix = owner // counts.shape[-1] + a
            n = self.hits.normal[pix]
            lum = _reflected_luminance(self.env, self.wo[pix], n, _to_world(local, n), self.rotation)
            per_vertex = np.bincount(owner, weights=lum, minlength=flat_counts.size).reshape(counts.shape)
            numer = np.sum(verts.weights * per_vertex, axis=-1)
            denom = self.expected_count[a:b] * expect[a:b]
            return np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), 0.0)
        return self._chunked(run)

    def modulation(self, mode: ShadeMode, seed: int) -> np.ndarray:
        if mode.kind in ("glint", "furnace"):
            return self.glint_modulation(seed)
        if mode.kind == "const_p":
            return self.const_p_modulation(seed, mode.gamma_deg)
        if mode.kind == "reference":
            return self.reference_modulation(seed)
        return np.ones(self.pixel_count)

    def image(self, modulation=None) -> ImageBuffer:
        cam = self.scene.camera
        out = self.background.copy()
        fg = self.smooth if modulation is None else self.smooth * np.asarray(modulation)[:, None]
        out[self.hits.index] = fg
        return ImageBuffer(out.reshape(cam.height, cam.width, 3).astype(np.float32), self.hits.mask.copy())

    def foreground(self, img: ImageBuffer) -> np.ndarray:
        return img.rgb.reshape(-1, 3)[self.hits.index].astype(np.float64)


def _slice_footprint(fp, a, b):
    return type(fp)(fp.center_uv[a:b], fp.major_len[a:b], fp.minor_len[a:b], fp.orientation[a:b], fp.area[a:b])


def furnace_inputs(k_count: int = 8, width: int = 64, samples: int = 256):
    """Unit white environment with its prefiltered chain (levels collapse to {0, 1})."""
    env = constant_env(1.0, width)
    return env, prefilter(env, compute_levels(env, k_count), samples_per_texel=samples)


def render(scene: Scene, mode: ShadeMode, penv: PrefilteredEnv | None = None, tables: AlbedoTables | None = None,
           env: EnvironmentMap | None = None, seed: int = 0, threads: int = 1) -> ImageBuffer:
    """Render one image; with ``mode.realizations > 1`` the realizations are averaged."""
    if mode.kind == "furnace":
        k = penv.k_count if penv is not None else 8
        env, penv = furnace_inputs(k)
    if penv is None:
        raise ValueError(f"mode {mode.kind!r} needs a prefiltered environment")
    if mode.kind == "reference" and env is None:
        raise ValueError("reference mode needs the source environment map")
    frame = PreparedFrame(scene, penv, tables, env, threads)
    if mode.kind == "smooth":
        return frame.image()
    if mode.kind == "reference":
        frame.check_reference_cap()
    root = RandomStream(seed)
    acc = np.zeros(frame.pixel_count)
    for r in range(mode.realizations):
        s = seed if mode.realizations == 1 else int(root.hash(r))
        acc += frame.modulation(mode, s)
    return frame.image(acc / mode.realizations)


def tonemap_write(img, exposure_stops: float, path) -> None:
    """PNG: clamp(linear * 2^stops) through the sRGB curve; PFM: raw linear floats."""
    rgb = img.rgb if isinstance(img, ImageBuffer) else np.asarray(img)
    path = str(path)
    if path.lower().endswith(".pfm"):
        write_pfm(path, rgb)
    elif path.lower().endswith(".png"):
        write_png(path, rgb, exposure_stops)
    else:
        raise ValueError(f"unsupported output format for {path!r} (use .png or .pfm)")


def with_density(scene: Scene, density_scale: float) -> Scene:
    return replace(scene, material=replace(scene.material, density_scale=density_scale))


def glint_fraction(img_rgb, smooth_rgb, floor: float = 0.01) -> float:
    """Fraction of shaded pixels whose luminance exceeds twice the smooth luminance."""
    base = lum709(smooth_rgb)
    sel = base > floor
    if not np.any(sel):
        return 0.0
    return float(np.mean(lum709(img_rgb)[sel] > 2.0 * base[sel]))


def glint_mask(img_rgb, smooth_rgb, floor: float = 0.01) -> np.ndarray:
    base = lum709(smooth_rgb)
    return (base > floor) & (lum709(img_rgb) > 2.0 * base)


def mask_change(a, b) -> float:
    """Share of glint locations not common to both masks (Jaccard distance; 0 when both are empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = int(np.sum(a | b))
    return 0.0 if union == 0 else 1.0 - int(np.sum(a & b)) / union
