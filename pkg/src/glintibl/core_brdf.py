"""Isotropic GGX microfacet BRDF and the integrated quantities behind the glint model.

Local shading frame is z-up: ``cos_theta`` values are z components of unit
vectors with the surface normal along +z.  Roughness tables are stored over
(cos_theta_o, sqrt(alpha)) and looked up bilinearly.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TABLE_MAGIC = b"GIBL"
TABLE_VERSION = 1
_ALPHA_MIN = 1e-4


@dataclass(frozen=True)
class SurfaceMaterial:
    """GGX material with a discrete microfacet density.

    ``log_n0`` is the natural log of the number of microfacets per unit uv
    patch; ``density_scale`` multiplies that count linearly.
    """

    alpha: float = 0.16
    f0: tuple[float, float, float] = (1.0, 1.0, 1.0)
    log_n0: float = 14.0
    density_scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if len(self.f0) != 3 or not all(0.0 <= c <= 1.0 for c in self.f0):
            raise ValueError("f0 must be three values in [0, 1]")
        if not self.density_scale > 0:
            raise ValueError("density_scale must be positive")
        if not np.isfinite(self.log_n0):
            raise ValueError("log_n0 must be finite")

    @classmethod
    def from_sqrt_alpha(cls, sqrt_alpha: float, **kw) -> "SurfaceMaterial":
        return cls(alpha=float(sqrt_alpha) ** 2, **kw)

    @property
    def n0(self) -> float:
        return float(np.exp(self.log_n0))

    @property
    def density(self) -> float:
        """Microfacets per unit uv patch, density scale included."""
        return float(self.density_scale * np.exp(self.log_n0))


def ggx_ndf(cos_theta_h, alpha) -> np.ndarray:
    """GGX normal distribution, per steradian of half-vector solid angle."""
    c = np.asarray(cos_theta_h, dtype=np.float64)
    a2 = np.asarray(alpha, dtype=np.float64) ** 2
    c2 = c * c
    d = a2 / (np.pi * (c2 * (a2 - 1.0) + 1.0) ** 2)
    return np.where(c >= 0, d, 0.0)


def smith_lambda(cos_theta, alpha) -> np.ndarray:
    c = np.clip(np.asarray(cos_theta, dtype=np.float64), 1e-12, 1.0)
    a2 = np.asarray(alpha, dtype=np.float64) ** 2
    tan2 = (1.0 - c * c) / (c * c)
    return 0.5 * (np.sqrt(1.0 + a2 * tan2) - 1.0)


def smith_g(cos_theta_i, cos_theta_o, alpha) -> np.ndarray:
    """Height-correlated Smith masking-shadowing for GGX."""
    return 1.0 / (1.0 + smith_lambda(cos_theta_i, alpha) + smith_lambda(cos_theta_o, alpha))


def schlick_fresnel(f0, cos_theta) -> np.ndarray:
    """Schlick's approximation; ``f0`` is RGB on the last axis."""
    f0 = np.asarray(f0, dtype=np.float64)
    m = (1.0 - np.clip(np.asarray(cos_theta, dtype=np.float64), 0.0, 1.0)) ** 5
    return f0 + (1.0 - f0) * m[..., None]


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def reflect(d, h) -> np.ndarray:
    """Mirror ``d`` (pointing away from the surface) about ``h``."""
    return 2.0 * _dot(d, h)[..., None] * h - d


def eval_smooth_brdf(wi, wo, n, material: SurfaceMaterial) -> np.ndarray:
    """Cosine-weighted GGX BRDF f(wi, wo)·(n·wi) as RGB; vectors on the last axis."""
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    nl = _dot(n, wi)
    nv = _dot(n, wo)
    h = wi + wo
    h = h / np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-30)
    d = ggx_ndf(_dot(n, h), material.alpha)
    g = smith_g(np.maximum(nl, 1e-12), nv, material.alpha)
    f = schlick_fresnel(material.f0, _dot(h, wo))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = f * (g * d / (4.0 * nv))[..., None]
    return np.where((nl > 0)[..., None], val, 0.0)


def d_total_closed_form(alpha) -> np.ndarray:
    """Total (unprojected) microfacet area per unit surface area.

    ``1 + a^2/b * asinh(b/a)`` with ``b = sqrt(1 - a^2)``; equals 1 at a=0
    and 2 at a=1.
    """
    a = np.clip(np.asarray(alpha, dtype=np.float64), 1e-300, 1.0)
    b = np.sqrt(np.maximum(1.0 - a * a, 0.0))
    safe_b = np.where(b > 1e-8, b, 1.0)
    # asinh(b/a)/b -> 1/a as b -> 0
    ratio = np.where(b > 1e-8, np.arcsinh(b / a) / safe_b, 1.0 / a)
    return 1.0 + a * a * ratio


def _unprojected_weight(v, alpha):
    """Integrand of D_H in the v parameterization (u = 1 - v^2 is the projected CDF)."""
    a2 = np.asarray(alpha, dtype=np.float64) ** 2
    return 2.0 * np.sqrt(a2 + (1.0 - a2) * v * v)


def _half_vector_cos(v, alpha):
    a2 = np.asarray(alpha, dtype=np.float64) ** 2
    return v / np.sqrt(a2 + (1.0 - a2) * v * v)


def d_visible_quadrature(cos_theta_o, alpha, samples: int = 2 ** 14) -> np.ndarray:
    """Area of microfacets whose mirror direction stays above the horizon.

    Integrates D over half-vectors with h·wo > 0 and n·wi > 0.  For each polar
    sample the admissible azimuth range is an arc found in closed form, so
    only one dimension is sampled (midpoint rule in v).
    """
    cos_o = np.asarray(cos_theta_o, dtype=np.float64)[..., None]
    alpha = np.asarray(alpha, dtype=np.float64)[..., None]
    v = (np.arange(samples) + 0.5) / samples
    ch = _half_vector_cos(v, alpha)
    sh = np.sqrt(np.maximum(1.0 - ch * ch, 0.0))
    so = np.sqrt(np.maximum(1.0 - cos_o * cos_o, 0.0))
    # need h.wo = sh*so*cos(phi) + ch*cos_o > cos_o / (2 ch)
    a = sh * so
    b = ch * cos_o
    thresh = cos_o / (2.0 * np.maximum(ch, 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(a > 1e-300, (thresh - b) / a, np.where(b > thresh, -np.inf, np.inf))
    frac = np.arccos(np.clip(x, -1.0, 1.0)) / np.pi
    return np.mean(_unprojected_weight(v, alpha) * frac, axis=-1)


def d_total_quadrature(alpha, samples: int = 2 ** 14) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)[..., None]
    v = (np.arange(samples) + 0.5) / samples
    return np.mean(_unprojected_weight(v, alpha), axis=-1)


def hammersley(count: int) -> np.ndarray:
    """2D Hammersley point set, shape (count, 2)."""
    i = np.arange(count, dtype=np.uint64)
    bits = i.copy()
    rev = np.zeros_like(bits)
    for _ in range(32):
        rev = (rev << np.uint64(1)) | (bits & np.uint64(1))
        bits >>= np.uint64(1)
    return np.stack([(i.astype(np.float64) + 0.5) / count, rev.astype(np.float64) / 2.0 ** 32], axis=-1)


def sample_ggx_half_vector(u1, u2, alpha) -> np.ndarray:
    """Half-vector (z-up) from the projected GGX distribution D(h)·cos_theta_h."""
    alpha = np.asarray(alpha, dtype=np.float64)
    cos2 = (1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1)
    ct = np.sqrt(np.clip(cos2, 0.0, 1.0))
    st = np.sqrt(np.clip(1.0 - cos2, 0.0, 1.0))
    phi = 2.0 * np.pi * u2
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), ct), axis=-1)


def split_sum_quadrature(cos_theta_o, alpha, samples: int = 2 ** 14) -> tuple[np.ndarray, np.ndarray]:
    """Split-sum Fresnel (scale, bias) by GGX importance sampling with Hammersley points."""
    cos_o = np.clip(np.asarray(cos_theta_o, dtype=np.float64), 1e-3, 1.0)
    alpha = np.maximum(np.asarray(alpha, dtype=np.float64), _ALPHA_MIN)
    cos_o, alpha = np.broadcast_arrays(cos_o, alpha)
    pts = hammersley(samples)
    scale = np.zeros(cos_o.shape)
    bias = np.zeros(cos_o.shape)
    chunk = max(1, (1 << 20) // samples)
    flat_c, flat_a = cos_o.ravel(), alpha.ravel()
    out_s, out_b = scale.reshape(-1), bias.reshape(-1)
    for s in range(0, flat_c.size, chunk):
        c = flat_c[s:s + chunk, None]
        a = flat_a[s:s + chunk, None]
        h = sample_ggx_half_vector(pts[:, 0], pts[:, 1], a)
        wo = np.stack(np.broadcast_arrays(np.sqrt(1.0 - c * c), 0.0 * c, c), axis=-1)
        voh = _dot(wo, h)
        nol = 2.0 * voh * h[..., 2] - c
        ok = (nol > 0) & (voh > 0)
        g = smith_g(np.maximum(nol, 1e-12), c, a)
        g_vis = np.where(ok, g * voh / (h[..., 2] * c), 0.0)
        fc = (1.0 - np.clip(voh, 0.0, 1.0)) ** 5
        out_s[s:s + chunk] = np.mean((1.0 - fc) * g_vis, axis=-1)
        out_b[s:s + chunk] = np.mean(fc * g_vis, axis=-1)
    return scale, bias


def _bilinear_axis(x, n):
    t = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * (n - 1)
    i0 = np.minimum(np.floor(t).astype(np.int64), n - 2)
    return i0, t - i0


@dataclass
class AlbedoTables:
    """D_H over sqrt(alpha); E_D and split-sum (scale, bias) over (cos_theta_o, sqrt(alpha))."""

    d_total: np.ndarray
    d_visible: np.ndarray
    scale: np.ndarray
    bias: np.ndarray
    samples: int = field(default=2 ** 14)

    @property
    def n_cos(self) -> int:
        return self.d_visible.shape[0]

    @property
    def n_alpha(self) -> int:
        return self.d_total.shape[0]

    def _lerp1(self, table, alpha):
        i, t = _bilinear_axis(np.sqrt(np.clip(alpha, 0.0, 1.0)), table.shape[0])
        return table[i] * (1.0 - t) + table[i + 1] * t

    def _lerp2(self, table, cos_o, alpha):
        cos_o, alpha = np.broadcast_arrays(np.asarray(cos_o, dtype=np.float64),
                                           np.asarray(alpha, dtype=np.float64))
        i, s = _bilinear_axis(cos_o, table.shape[0])
        j, t = _bilinear_axis(np.sqrt(np.clip(alpha, 0.0, 1.0)), table.shape[1])
        return ((table[i, j] * (1 - t) + table[i, j + 1] * t) * (1 - s)
                + (table[i + 1, j] * (1 - t) + table[i + 1, j + 1] * t) * s)

    def total_area(self, alpha) -> np.ndarray:
        return self._lerp1(self.d_total, alpha)

    def visible_area(self, cos_theta_o, alpha) -> np.ndarray:
        return self._lerp2(self.d_visible, cos_theta_o, alpha)

    def fresnel_split(self, cos_theta_o, alpha) -> tuple[np.ndarray, np.ndarray]:
        return self._lerp2(self.scale, cos_theta_o, alpha), self._lerp2(self.bias, cos_theta_o, alpha)

    def albedo(self, f0, cos_theta_o, alpha) -> np.ndarray:
        """Directional albedo f0·scale + bias, RGB on the last axis."""
        s, b = self.fresnel_split(cos_theta_o, alpha)
        return np.asarray(f0, dtype=np.float64) * s[..., None] + b[..., None]

    def save(self, path) -> None:
        header = TABLE_MAGIC + struct.pack("<III", TABLE_VERSION, self.n_cos, self.n_alpha)
        body = np.concatenate([self.d_total.ravel(), self.d_visible.ravel(),
                               self.scale.ravel(), self.bias.ravel()]).astype("<f4")
        Path(path).write_bytes(header + body.tobytes())

    @classmethod
    def load(cls, path) -> "AlbedoTables":
        raw = Path(path).read_bytes()
        if raw[:4] != TABLE_MAGIC:
            raise ValueError(f"{path}: not an albedo table cache")
        version, n_cos, n_alpha = struct.unpack("<III", raw[4:16])
        if version != TABLE_VERSION:
            raise ValueError(f"{path}: table cache version {version}, expected {TABLE_VERSION}")
        data = np.frombuffer(raw[16:], dtype="<f4").astype(np.float64)
        sizes = [n_alpha, n_cos * n_alpha, n_cos * n_alpha, n_cos * n_alpha]
        if data.size != sum(sizes):
            raise ValueError(f"{path}: truncated table cache")
        parts = np.split(data, np.cumsum(sizes)[:-1])
        return cls(parts[0], parts[1].reshape(n_cos, n_alpha),
                   parts[2].reshape(n_cos, n_alpha), parts[3].reshape(n_cos, n_alpha))


def build_albedo_tables(resolution: int = 64, quadrature_samples: int = 2 ** 14) -> AlbedoTables:
    """Integrate D_H, E_D and the split-sum LUT on a (cos_theta_o, sqrt(alpha)) grid."""
    if resolution < 16:
        raise ValueError("table resolution must be at least 16")
    if quadrature_samples < 2 ** 14:
        raise ValueError("quadrature needs at least 2**14 samples")
    grid = np.linspace(0.0, 1.0, resolution)
    alpha = np.maximum(grid ** 2, _ALPHA_MIN)
    d_total = d_total_quadrature(alpha, quadrature_samples)
    d_visible = d_visible_quadrature(grid[:, None], alpha[None, :], quadrature_samples)
    scale, bias = split_sum_quadrature(grid[:, None], alpha[None, :], quadrature_samples)
    # single scattering never exceeds unit albedo; trim quadrature overshoot at grazing
    excess = np.maximum(scale + bias, 1.0)
    scale, bias = scale / excess, bias / excess
    tables = AlbedoTables(d_total, d_visible, scale, bias, quadrature_samples)
    for name in ("d_total", "d_visible", "scale", "bias"):
        arr = getattr(tables, name)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite entries in {name}")
    return tables


def default_cache_path() -> Path:
    root = os.environ.get("GLINTIBL_CACHE_DIR") or os.path.join(Path.home(), ".cache", "glintibl")
    return Path(root) / f"albedo_v{TABLE_VERSION}.gibl"


_TABLE_MEMO: dict = {}


def load_albedo_tables(path=None, resolution: int = 64, quadrature_samples: int = 2 ** 14) -> AlbedoTables:
    """Load cached tables, rebuilding when the cache is missing, stale or shaped differently."""
    key = (str(path), resolution, quadrature_samples)
    if key in _TABLE_MEMO:
        return _TABLE_MEMO[key]
    path = Path(path) if path is not None else default_cache_path()
    tables = None
    if path.exists():
        try:
            tables = AlbedoTables.load(path)
            if tables.n_cos != resolution or tables.n_alpha != resolution:
                tables = None
        except ValueError:
            tables = None
    if tables is None:
        tables = build_albedo_tables(resolution, quadrature_samples)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tables.save(path)
        except OSError:
            pass
    _TABLE_MEMO[key] = tables
    return tables
