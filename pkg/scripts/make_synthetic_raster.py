#!/usr/bin/env python3
"""Generate a synthetic Marmousi-flavoured raster velocity file (layered
background with dipping interfaces plus smooth lateral perturbations) in the
documented binary format, then print a config snippet to run on it.

    python3 scripts/make_synthetic_raster.py model.vel --nx 368 --ny 120
"""
import argparse

import numpy as np

from wavedd.velocity import save_raster_model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("path")
    ap.add_argument("--nx", type=int, default=368)
    ap.add_argument("--ny", type=int, default=120)
    ap.add_argument("--width", type=float, default=9.2)
    ap.add_argument("--height", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    x = np.linspace(0, args.width, args.nx)
    y = np.linspace(0, args.height, args.ny)
    X, Y = np.meshgrid(x, y)
    # velocity increases with depth (y = 0 is the bottom here), 1.5..5.5 km/s
    depth = 1.0 - Y / args.height
    c = 1.5 + 4.0 * depth**1.3
    for _ in range(6):  # dipping layer interfaces with speed jumps
        y0 = rng.uniform(0.15, 0.85) * args.height
        slope = rng.uniform(-0.08, 0.08)
        jump = rng.uniform(-0.5, 0.5)
        c += jump * (Y > y0 + slope * (X - args.width / 2))
    c += 0.15 * np.sin(2 * np.pi * X / args.width * rng.integers(2, 5))
    c = np.clip(c, 1.5, 5.5)
    save_raster_model(args.path, c, (0.0, args.width, 0.0, args.height))
    print(f"wrote {args.path} ({args.nx}x{args.ny}, c in [{c.min():.2f}, {c.max():.2f}] km/s)")
    print("\nrun it with e.g.:")
    print(f"  model = raster:{args.path}")
    print(f"  width = {args.width}")
    print(f"  height = {args.height}")
    print("  f = 2.0\n  ppwl = 10\n  n_subdomains = 8\n  preconditioner = grid")


if __name__ == "__main__":
    main()
