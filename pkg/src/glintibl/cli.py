"""``glintibl`` command line: prefilter, render, validate-counting, validate-pow, furnace, compare.

Exit codes: 0 on success (all metrics pass), 1 when a metric fails, 2 on
usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .envmap import (EnvironmentMap, PrefilteredEnv, compute_levels, constant_env, load_envmap, log_span_env,
                     prefilter, three_region_env)
from .imageio import ImageFormatError

SYNTHETIC = {
    "three_region": three_region_env,
    "constant": lambda: constant_env(1.0, 64),
    "log_span": lambda: log_span_env(-5.0, 5.0, 64),
}
EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class CliError(Exception):
    pass


def _env_default(name: str, fallback: int) -> int:
    raw = os.environ.get(f"{cfgmod.ENV_PREFIX}{name}")
    return fallback if raw is None else int(raw, 0)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (env {cfgmod.ENV_PREFIX}SEED, default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (env {cfgmod.ENV_PREFIX}THREADS, default 1)")
    common.add_argument("--config", default=None, help="INI render configuration")
    return common


def load_environment(spec: str) -> EnvironmentMap:
    """Read an .hdr/.pfm file, or build ``synthetic:<name>``."""
    if spec.startswith("synthetic:"):
        name = spec.split(":", 1)[1]
        if name not in SYNTHETIC:
            raise CliError(f"unknown synthetic environment {name!r}; choose from {sorted(SYNTHETIC)}")
        return SYNTHETIC[name]()
    return load_envmap(spec)


def _print_levels(penv: PrefilteredEnv) -> None:
    lv = penv.levels
    print(f"levels K={lv.k_count} space={lv.space} clip_floor={lv.clip_floor:g}"
          f"{' (degenerate)' if lv.degenerate else ''}")
    for k, value in enumerate(lv.levels, start=1):
        print(f"L_{k} {value:.9g}")


# subcommands -------------------------------------------------------------------

def cmd_prefilter(args) -> int:
    env = load_environment(args.env)
    levels = compute_levels(env, args.k, args.clip_floor, args.space)
    penv = prefilter(env, levels, mip_count=args.mip_count, samples_per_texel=args.samples, quantize=args.quantize)
    penv.save(args.out)
    _print_levels(penv)
    print(f"wrote {args.out}")
    return EXIT_OK


def _resolve_environment(sec: cfgmod.EnvmapSection, need_source: bool):
    source = sec.path or f"synthetic:{sec.synthetic}"
    env = None
    if sec.cache and Path(sec.cache).exists():
        penv = PrefilteredEnv.load(sec.cache)
        if need_source:
            env = load_environment(source)
        return env, penv
    env = load_environment(source)
    levels = compute_levels(env, sec.k, sec.clip_floor, sec.space)
    penv = prefilter(env, levels, mip_count=sec.mip_count, samples_per_texel=sec.samples, quantize=sec.quantize)
    if sec.cache:
        penv.save(sec.cache)
    return env, penv


def build_render_config(args) -> cfgmod.RenderConfig:
    overrides = {}
    for section, key, _ in cfgmod.RenderConfig().keys():
        value = getattr(args, f"{section}__{key}", None)
        if value is not None:
            overrides[(section, key)] = value
    cfg = cfgmod.load_config(args.config, overrides=overrides)
    if args.seed is not None:
        cfg.seed.value = args.seed
    elif f"{cfgmod.ENV_PREFIX}SEED" in os.environ:
        cfg.seed.value = _env_default("SEED", 0)
    return cfg


def scene_from_config(cfg: cfgmod.RenderConfig):
    from .core_brdf import SurfaceMaterial
    from .renderer import Camera, Scene, ShadeMode

    sc, mat = cfg.scene, cfg.material
    camera = Camera(position=tuple(sc.camera_position), look_at=tuple(sc.look_at), vfov_deg=sc.fov,
                    width=sc.width, height=sc.height)
    material = SurfaceMaterial.from_sqrt_alpha(mat.sqrt_alpha, f0=tuple(mat.f0), log_n0=mat.log_n0,
                                               density_scale=mat.density_scale)
    scene = Scene(geometry=sc.geometry, camera=camera, env_rotation_deg=sc.env_rotation, material=material,
                  uv_scale=sc.uv_scale)
    return scene, ShadeMode(cfg.mode.kind, cfg.mode.gamma, cfg.mode.realizations)


def cmd_render(args) -> int:
    from .renderer import render, tonemap_write

    cfg = build_render_config(args)
    print(cfg.dump())
    scene, mode = scene_from_config(cfg)
    threads = args.threads if args.threads is not None else _env_default("THREADS", 1)
    env, penv = (None, None) if mode.kind == "furnace" else _resolve_environment(cfg.envmap, mode.kind == "reference")
    img = render(scene, mode, penv, env=env, seed=cfg.seed.value, threads=threads)
    for fmt in cfg.output.formats:
        path = f"{cfg.output.path}.{fmt}"
        tonemap_write(img, cfg.output.exposure, path)
        print(f"wrote {path}")
    return EXIT_OK


def _emit(report) -> int:
    print(report.text())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_validate_counting(args) -> int:
    from .validate import validate_counting

    return _emit(validate_counting(args.draws, _seed(args)))


def cmd_validate_pow(args) -> int:
    from .validate import validate_pow

    return _emit(validate_pow(args.out))


def cmd_furnace(args) -> int:
    from .validate import validate_furnace

    if args.realizations < 256:
        raise CliError("furnace needs at least 256 realizations")
    densities = tuple(math.exp(float(x)) for x in args.log_densities.split(","))
    threads = args.threads if args.threads is not None else _env_default("THREADS", 1)
    return _emit(validate_furnace(args.resolution, args.sqrt_alpha, densities, args.realizations, args.log_n0,
                                  _seed(args), threads, args.threshold, args.out))


def cmd_compare(args) -> int:
    from .validate import compare_files

    return _emit(compare_files(args.a, args.b, args.threshold, args.floor))


def _seed(args) -> int:
    return args.seed if args.seed is not None else _env_default("SEED", 0)


# parser ------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (also GLINTIBL_<SECTION>_<KEY>)")
    for section, key, default in cfgmod.RenderConfig().keys():
        shown = cfgmod._format(default)
        group.add_argument(cfgmod.flag_name(section, key), dest=f"{section}__{key}", default=None, metavar="V",
                           help=f"[{section}] {key} (default: {shown or 'empty'})")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="glintibl", description="Real-time image-based lighting of glints.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prefilter", parents=[common], help="compute levels and the prefiltered weight chain")
    p.add_argument("env", help="environment .hdr/.pfm or synthetic:<name>")
    p.add_argument("-o", "--out", required=True, help="output cache file (.gibp)")
    p.add_argument("-k", "--k", type=int, default=8, help="number of radiance levels")
    p.add_argument("--clip-floor", type=float, default=1e-3)
    p.add_argument("--space", choices=("linear", "log"), default="linear")
    p.add_argument("--mip-count", type=int, default=7)
    p.add_argument("--samples", type=int, default=1024, help="importance samples per texel")
    p.add_argument("--quantize", action="store_true", help="store weights as 16-bit unorm")
    p.set_defaults(func=cmd_prefilter)

    p = sub.add_parser("render", parents=[common], help="render the analytic scene")
    _add_config_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate-counting", parents=[common], help="statistical checks of the counting core")
    p.add_argument("--draws", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_validate_counting)

    p = sub.add_parser("validate-pow", parents=[common], help="(1-p)^N float32 error maps")
    p.add_argument("--out", default=None, help="directory for the error-map PFMs")
    p.set_defaults(func=cmd_validate_pow)

    p = sub.add_parser("furnace", parents=[common], help="white furnace energy check")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--sqrt-alpha", type=float, default=0.4)
    p.add_argument("--log-densities", default="-2,0,2", help="comma-separated log density scales")
    p.add_argument("--realizations", type=int, default=1024)
    p.add_argument("--log-n0", type=float, default=14.0)
    p.add_argument("--threshold", type=float, default=0.03)
    p.add_argument("--out", default=None, help="directory for furnace images")
    p.set_defaults(func=cmd_furnace)

    p = sub.add_parser("compare", parents=[common], help="relative error between two images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--threshold", type=float, default=0.05, help="pass iff mean relative error is below this")
    p.add_argument("--floor", type=float, default=0.01, help="luminance floor")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename else str(exc).replace("file not found: ", "")
        print(f"error: file not found: {missing}", file=sys.stderr)
    except (CliError, cfgmod.ConfigError, ImageFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
