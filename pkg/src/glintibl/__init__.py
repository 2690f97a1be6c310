"""Real-time image-based lighting of glints.

Split-sum IBL is multiplied by a per-pixel modulation drawn from a discrete
microfacet counting model over K environment radiance levels.
"""
from .core_brdf import AlbedoTables, SurfaceMaterial, build_albedo_tables, load_albedo_tables
from .counting import dual_gated, sample_multinomial, stable_pow_one_minus
from .envmap import EnvironmentMap, PrefilteredEnv, compute_levels, fuzzy_weights, load_envmap, prefilter
from .renderer import Camera, ImageBuffer, PreparedFrame, Scene, ShadeMode, render
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "AlbedoTables", "Camera", "EnvironmentMap", "ImageBuffer", "PrefilteredEnv", "PreparedFrame", "RandomStream",
    "Scene", "ShadeMode", "SurfaceMaterial", "build_albedo_tables", "compute_levels", "dual_gated",
    "fuzzy_weights", "load_albedo_tables", "load_envmap", "prefilter", "render", "sample_multinomial",
    "stable_pow_one_minus",
]
