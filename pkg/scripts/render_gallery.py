"""Render the three-region sphere in every shading mode, writing PNG and PFM files.

    python3 scripts/render_gallery.py --out gallery --size 256
"""
import argparse
import math
from pathlib import Path

from glintibl.core_brdf import SurfaceMaterial
from glintibl.envmap import compute_levels, prefilter, three_region_env
from glintibl.renderer import Camera, Scene, ShadeMode, render, tonemap_write


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="gallery")
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--log-density", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = three_region_env()
    penv = prefilter(env, compute_levels(env, 8))
    mat = SurfaceMaterial.from_sqrt_alpha(0.4, log_n0=14.0, density_scale=math.exp(args.log_density))
    scene = Scene(camera=Camera(width=args.size, height=args.size), material=mat)
    for kind in ("smooth", "glint", "const_p", "reference", "furnace"):
        try:
            img = render(scene, ShadeMode(kind), penv, env=env, seed=args.seed, threads=args.threads)
        except ValueError as exc:
            print(f"{kind}: skipped ({exc})")
            continue
        for ext in ("png", "pfm"):
            tonemap_write(img, 0.0, out / f"{kind}.{ext}")
        print(f"{kind}: wrote {out / kind}.png")


if __name__ == "__main__":
    main()
