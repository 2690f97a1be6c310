"""Equirectangular environments, radiance levels and GGX prefiltering.

Directions are y-up: a texel at (row i, column j) of an H x W map looks along
``(sin t cos p, cos t, sin t sin p)`` with ``t = (i + 0.5) / H * pi`` and
``p = (j + 0.5) / W * 2 pi``.  Lookups wrap horizontally and clamp vertically.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_brdf import ggx_ndf, hammersley, sample_ggx_half_vector
from .imageio import read_image

REC709 = np.array([0.2126, 0.7152, 0.0722])
PREFILTER_MAGIC = b"GIBP"
PREFILTER_VERSION = 1
SPACES = ("linear", "log")


@dataclass
class EnvironmentMap:
    """Linear RGB radiance on a 2:1 equirectangular grid, float32 (H, W, 3)."""

    texels: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.texels, dtype=np.float32)
        if t.ndim != 3 or t.shape[2] != 3:
            raise ValueError("environment texels must have shape (H, W, 3)")
        if t.shape[1] != 2 * t.shape[0]:
            raise ValueError(f"not equirectangular 2:1 ({t.shape[1]}x{t.shape[0]})")
        if not np.all(np.isfinite(t)):
            raise ValueError("environment contains non-finite texels")
        if np.any(t < 0):
            raise ValueError("environment contains negative texels")
        self.texels = t

    @property
    def width(self) -> int:
        return self.texels.shape[1]

    @property
    def height(self) -> int:
        return self.texels.shape[0]

    def lookup(self, dirs) -> np.ndarray:
        return bilinear_lookup(self.texels, dirs)

    def luminance(self) -> np.ndarray:
        return luminance(self.texels)

    def scaled(self, a: float) -> "EnvironmentMap":
        return EnvironmentMap(self.texels * np.float32(a))


def load_envmap(path) -> EnvironmentMap:
    """Read an .hdr or .pfm equirectangular map (no tone curve is applied)."""
    return EnvironmentMap(read_image(path))


def luminance(rgb) -> np.ndarray:
    """Rec.709 luma of linear RGB on the last axis."""
    return np.asarray(rgb, dtype=np.float64) @ REC709


def texel_directions(height: int, width: int) -> np.ndarray:
    theta = (np.arange(height) + 0.5) / height * np.pi
    phi = (np.arange(width) + 0.5) / width * 2.0 * np.pi
    st = np.sin(theta)[:, None]
    return np.stack(np.broadcast_arrays(st * np.cos(phi), np.cos(theta)[:, None], st * np.sin(phi)), axis=-1)


def direction_to_uv(dirs) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dirs, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 2], d[..., 0])
    return np.mod(phi / (2.0 * np.pi), 1.0), theta / np.pi


def rotate_y(dirs, angle: float) -> np.ndarray:
    """Rotate directions about the up axis so that azimuth phi becomes phi + angle."""
    d = np.asarray(dirs, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([c * d[..., 0] - s * d[..., 2], d[..., 1], s * d[..., 0] + c * d[..., 2]], axis=-1)


def bilinear_lookup(grid: np.ndarray, dirs) -> np.ndarray:
    """Bilinear fetch from an equirect grid (H, W, C); wraps in u, clamps in v."""
    u, v = direction_to_uv(dirs)
    return bilinear_lookup_uv(grid, u, v)


def bilinear_lookup_uv(grid: np.ndarray, u, v) -> np.ndarray:
    h, w = grid.shape[:2]
    flat = grid.reshape(h * w, -1)
    x = np.asarray(u) * w - 0.5
    y = np.clip(np.asarray(v) * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x)
    fx = x - x0
    x0 = x0.astype(np.int64) % w
    x1 = x0 + 1
    x1[x1 == w] = 0
    y0 = np.minimum(y.astype(np.int64), h - 1)
    fy = y - y0
    r0 = y0 * w
    r1 = np.minimum(y0 + 1, h - 1) * w
    out = np.take(flat, r0 + x0, axis=0) * ((1.0 - fx) * (1.0 - fy))[..., None]
    out += np.take(flat, r0 + x1, axis=0) * (fx * (1.0 - fy))[..., None]
    out += np.take(flat, r1 + x0, axis=0) * ((1.0 - fx) * fy)[..., None]
    out += np.take(flat, r1 + x1, axis=0) * (fx * fy)[..., None]
    return out


@dataclass(frozen=True)
class RadianceLevels:
    """K luminance levels; level 1 is zero and also the below-horizon sink."""

    levels: np.ndarray
    clip_floor: float = 1e-3
    space: str = "linear"

    @property
    def k_count(self) -> int:
        return int(len(self.levels))

    @property
    def degenerate(self) -> bool:
        """True when every level above the first coincides (constant or black env)."""
        return bool(self.levels[1] >= self.levels[-1])

    def positions(self) -> np.ndarray:
        """Level coordinates in the interpolation space."""
        lv = np.asarray(self.levels, dtype=np.float64)
        if self.space == "linear":
            return lv
        return np.log(np.maximum(np.concatenate([[self.clip_floor], lv[1:]]), 1e-300))


def compute_levels(env, k_count: int = 8, clip_floor: float = 1e-3, space: str = "linear") -> RadianceLevels:
    """Log-spaced levels between the clipped minimum and the maximum luminance."""
    if k_count < 2:
        raise ValueError("need at least two radiance levels")
    if not clip_floor > 0:
        raise ValueError("clip floor must be positive")
    if space not in SPACES:
        raise ValueError(f"unknown interpolation space {space!r}")
    lum = luminance(env.texels if isinstance(env, EnvironmentMap) else env)
    finite = lum[np.isfinite(lum)]
    if finite.size == 0:
        raise ValueError("environment has no finite texels")
    hi = float(finite.max())
    lo = max(float(finite.min()), clip_floor)
    levels = np.zeros(k_count)
    if hi <= lo:
        levels[1:] = max(hi, clip_floor)
    else:
        t = np.arange(1, k_count) / (k_count - 1)
        levels[1:] = np.exp(np.log(lo) + (np.log(hi) - np.log(lo)) * t)
        levels[-1] = hi
    return RadianceLevels(levels, clip_floor, space)


def fuzzy_weights(lum, levels: RadianceLevels) -> np.ndarray:
    """Convex weights over the two levels bracketing each luminance, shape (..., K)."""
    lum = np.asarray(lum, dtype=np.float64)
    k = levels.k_count
    out = np.zeros(lum.shape + (k,))
    if levels.degenerate:
        hot = np.where(lum > 0, k - 1, 0)
        np.put_along_axis(out, hot[..., None], 1.0, axis=-1)
        return out
    pos = levels.positions()
    if levels.space == "linear":
        x = lum
    else:
        with np.errstate(divide="ignore"):
            x = np.log(np.maximum(lum, 1e-300))
    j = np.clip(np.searchsorted(pos, x, side="right") - 1, 0, k - 2)
    lo, hi = pos[j], pos[j + 1]
    width = hi - lo
    t = np.where(width > 0, (x - lo) / np.where(width > 0, width, 1.0), (x >= hi).astype(np.float64))
    t = np.clip(t, 0.0, 1.0)
    np.put_along_axis(out, j[..., None], (1.0 - t)[..., None], axis=-1)
    np.put_along_axis(out, (j + 1)[..., None], t[..., None], axis=-1)
    return out


def roughness_ladder(mip_count: int) -> np.ndarray:
    m = np.arange(mip_count)
    return (m / (mip_count - 1)) ** 2


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sign = np.where(n[..., 2] >= 0, 1.0, -1.0)
    a = -1.0 / (sign + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack([1.0 + sign * n[..., 0] ** 2 * a, sign * b, -sign * n[..., 0]], axis=-1)
    s = np.stack([b, sign + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, s


def _box_pyramid(grid: np.ndarray) -> list[np.ndarray]:
    levels = [grid]
    while levels[-1].shape[0] % 2 == 0 and levels[-1].shape[0] >= 2:
        g = levels[-1]
        levels.append(0.25 * (g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2]))
    return levels


def _pyramid_lookup(pyramid, dirs, lod: float) -> np.ndarray:
    """Trilinear fetch at one level of detail."""
    lod = float(np.clip(lod, 0.0, len(pyramid) - 1))
    level = min(int(np.floor(lod)), len(pyramid) - 1)
    u, v = direction_to_uv(dirs)
    val = bilinear_lookup_uv(pyramid[level], u, v)
    f = lod - level
    if f > 0 and level + 1 < len(pyramid):
        val = val * (1.0 - f) + bilinear_lookup_uv(pyramid[level + 1], u, v) * f
    return val


def _filter_chunk(pyramid, dirs, local, nol, lod) -> np.ndarray:
    """Weighted average of pyramid fetches over local sample directions for each of ``dirs``."""
    t_ax, b_ax = orthonormal_basis(dirs)
    world = (t_ax[:, None, :] * local[None, :, 0:1] + b_ax[:, None, :] * local[None, :, 1:2]
             + dirs[:, None, :] * local[None, :, 2:3])
    u, v = direction_to_uv(world)
    top = len(pyramid) - 1
    lod = np.clip(lod, 0.0, top)
    base = np.minimum(np.floor(lod).astype(np.int64), top)
    acc = np.zeros((dirs.shape[0], pyramid[0].shape[2]))
    for level in np.unique(base):
        idx = np.nonzero(base == level)[0]
        uu, vv = u[:, idx], v[:, idx]
        f = lod[idx] - level
        wa = nol[idx] * (1.0 - f)
        acc += np.einsum("nsc,s->nc", bilinear_lookup_uv(pyramid[level], uu, vv), wa)
        if level + 1 <= top and np.any(f > 0):
            acc += np.einsum("nsc,s->nc", bilinear_lookup_uv(pyramid[level + 1], uu, vv), nol[idx] * f)
    return acc / nol.sum()


@dataclass
class PrefilteredEnv:
    """Roughness mip chain; each mip holds RGB radiance then K weight channels."""

    mips: list[np.ndarray]
    alphas: np.ndarray
    levels: RadianceLevels
    quantized: bool = False

    @property
    def k_count(self) -> int:
        return self.levels.k_count

    @property
    def mip_count(self) -> int:
        return len(self.mips)

    def mip_blend(self, alpha):
        """Lower mip index and blend factor for roughness ``alpha`` on the sqrt ladder."""
        top = self.mip_count - 1
        t = np.clip(np.sqrt(np.maximum(np.asarray(alpha, dtype=np.float64), 0.0)) * top, 0.0, top)
        m0 = np.minimum(np.floor(t).astype(np.int64), max(top - 1, 0))
        return m0, t - m0

    def save(self, path) -> None:
        lv = self.levels
        flags = int(self.quantized) | (2 if lv.space == "log" else 0)
        parts = [PREFILTER_MAGIC, struct.pack("<IIIIf", PREFILTER_VERSION, self.k_count, self.mip_count,
                                              flags, lv.clip_floor),
                 np.asarray(lv.levels, dtype="<f4").tobytes()]
        for mip, a in zip(self.mips, self.alphas):
            parts.append(struct.pack("<IIf", mip.shape[1], mip.shape[0], a))
        for mip in self.mips:
            parts.append(np.ascontiguousarray(mip, dtype="<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path) -> "PrefilteredEnv":
        raw = Path(path).read_bytes()
        if raw[:4] != PREFILTER_MAGIC:
            raise ValueError(f"{path}: not a prefiltered environment cache")
        version, k, count, flags, clip = struct.unpack("<IIIIf", raw[4:24])
        if version != PREFILTER_VERSION:
            raise ValueError(f"{path}: cache version {version}, expected {PREFILTER_VERSION}")
        pos = 24
        levels = np.frombuffer(raw, "<f4", k, pos).astype(np.float64)
        pos += 4 * k
        dims = []
        for _ in range(count):
            dims.append(struct.unpack("<IIf", raw[pos:pos + 12]))
            pos += 12
        mips = []
        for w, h, _a in dims:
            n = w * h * (3 + k)
            mips.append(np.frombuffer(raw, "<f4", n, pos).reshape(h, w, 3 + k).astype(np.float32))
            pos += 4 * n
        space = "log" if flags & 2 else "linear"
        return cls(mips, np.array([d[2] for d in dims], dtype=np.float64),
                   RadianceLevels(levels, float(clip), space), bool(flags & 1))


def _quantize_unorm16(w: np.ndarray) -> np.ndarray:
    return (np.floor(np.clip(w, 0.0, 1.0) * 65535.0 + 0.5) / 65535.0).astype(np.float32)


def prefilter(env: EnvironmentMap, levels: RadianceLevels, mip_count: int = 7, samples_per_texel: int = 1024,
              base_width: int = 256, min_width: int = 32, quantize: bool = False,
              chunk_elems: int = 1 << 18) -> PrefilteredEnv:
    """GGX-filter radiance and fuzzy weights into a roughness mip chain.

    Each output direction d uses n = wo = wr = d.  Source fetches come from a
    box pyramid at a per-sample level of detail (filtered importance
    sampling), which depends only on the sample, not on d, so it is computed
    once per mip.  Every texel uses the same Hammersley set, so the result
    is deterministic and independent of evaluation order.
    """
    if mip_count < 2:
        raise ValueError("need at least two mips")
    weights = fuzzy_weights(luminance(env.texels), levels)
    source = np.concatenate([env.texels, weights.astype(np.float32)], axis=-1)
    pyramid = _box_pyramid(source)
    alphas = roughness_ladder(mip_count)
    base_width = min(base_width, env.width)
    min_width = min(min_width, base_width)
    texel_solid_angle = 4.0 * np.pi / (env.width * env.height)
    pts = hammersley(samples_per_texel)
    mips = []
    for m, alpha in enumerate(alphas):
        w = max(base_width >> m, min_width)
        dirs = texel_directions(w // 2, w).reshape(-1, 3)
        if alpha == 0.0:
            lod = np.log2(env.width / w)
            out = _pyramid_lookup(pyramid, dirs, lod)
        else:
            h = sample_ggx_half_vector(pts[:, 0], pts[:, 1], alpha)
            local = 2.0 * h[:, 2:3] * h - np.array([0.0, 0.0, 1.0])
            nol = local[:, 2]
            keep = nol > 0
            local, nol, hz = local[keep], nol[keep], h[keep, 2]
            pdf = ggx_ndf(hz, alpha) / 4.0
            lod = 0.5 * np.log2(1.0 / (samples_per_texel * pdf * texel_solid_angle)) + 1.0
            out = np.zeros((dirs.shape[0], source.shape[2]))
            step = max(1, chunk_elems // len(nol))
            for s in range(0, dirs.shape[0], step):
                out[s:s + step] = _filter_chunk(pyramid, dirs[s:s + step], local, nol, lod)
        mip = out.reshape(w // 2, w, -1).astype(np.float32)
        if quantize:
            mip[..., 3:] = _quantize_unorm16(mip[..., 3:])
        mips.append(mip)
    return PrefilteredEnv(mips, alphas, levels, quantize)


def sample_prefiltered(penv: PrefilteredEnv, dirs, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear (bilinear x mip) lookup; returns RGB and weights renormalized to sum 1."""
    dirs = np.asarray(dirs, dtype=np.float64)
    shape = dirs.shape[:-1]
    m0, f = penv.mip_blend(np.broadcast_to(np.asarray(alpha, dtype=np.float64), shape))
    out = np.zeros(shape + (3 + penv.k_count,))
    for mip in np.unique(m0):
        sel = m0 == mip
        d = dirs[sel]
        val = bilinear_lookup(penv.mips[mip], d)
        if mip + 1 < penv.mip_count:
            fs = f[sel][:, None]
            val = np.where(fs > 0, val * (1.0 - fs) + bilinear_lookup(penv.mips[mip + 1], d) * fs, val)
        out[sel] = val
    rgb = out[..., :3]
    w = np.maximum(out[..., 3:], 0.0)
    total = w.sum(axis=-1, keepdims=True)
    w = np.where(total > 0, w / np.where(total > 0, total, 1.0), 0.0)
    return rgb, w


# synthetic environments --------------------------------------------------------

def constant_env(value=1.0, width: int = 64) -> EnvironmentMap:
    rgb = np.broadcast_to(np.asarray(value, dtype=np.float32), (3,))
    return EnvironmentMap(np.broadcast_to(rgb, (width // 2, width, 3)).copy())


def log_span_env(lo: float = -5.0, hi: float = 5.0, width: int = 64) -> EnvironmentMap:
    """Grey map whose luminance runs from e^lo (top row) to e^hi (bottom row)."""
    h = width // 2
    t = np.linspace(lo, hi, h)
    lum = np.exp(t)[:, None, None]
    return EnvironmentMap(np.broadcast_to(lum, (h, width, 3)).astype(np.float32).copy())


def three_region_env(width: int = 256, ground: float = 0.02, sky: float = 1.0, sun: float = 10.0,
                     sun_elevation_deg: float = 30.0, sun_azimuth_deg: float = 60.0,
                     sun_radius_deg: float = 12.0) -> EnvironmentMap:
    """Dark ground, uniform sky and a small bright disc (all grey)."""
    h = width // 2
    dirs = texel_directions(h, width)
    el, az = np.radians(sun_elevation_deg), np.radians(sun_azimuth_deg)
    sun_dir = np.array([np.cos(el) * np.cos(az), np.sin(el), np.cos(el) * np.sin(az)])
    lum = np.where(dirs[..., 1] > 0, sky, ground)
    lum = np.where(dirs @ sun_dir > np.cos(np.radians(sun_radius_deg)), sun, lum)
    return EnvironmentMap(np.repeat(lum[..., None], 3, axis=2).astype(np.float32))
