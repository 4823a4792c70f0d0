"""Sample the regularized action over a small disk in moduli and check the
Levi form, i.e. the Kahler-potential property, numerically.

    python scripts/action_surface_demo.py --out surface_out --spacing 0.05

Writes surface.csv with (Re eps, Im eps, S, fit error, flag) rows; the
Levi form from the plus-stencil must come out positive on the regular
locus.
"""

import argparse
import time
from pathlib import Path

from rhwznw import fuchs, moduli, rhsolve

WEIGHTS = [[0.15, 0.35], [0.2, 0.45], [0.1, 0.3], [0.05, 0.4]]
POINTS = [-1.0, 0.0, 1.0]


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="surface_out")
    parser.add_argument("--spacing", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ws = fuchs.build_weight_system(POINTS, WEIGHTS)
    center = moduli.random_admissible_rep(ws, seed=args.seed)
    direction = moduli.random_tangent_direction(ws, seed=1)
    family = moduli.RepFamily(center, direction)

    a = args.spacing
    grid = [0.0, a, -a, 1j * a, -1j * a]
    t0 = time.time()
    points = moduli.action_surface(
        family, grid, solve_opts=rhsolve.SolveOptions(seed=3)
    )
    print(f"surface of {len(points)} points in {time.time() - t0:.0f}s")
    for p in points:
        tag = f"S = {p.action:+.8f}" if p.ok else f"hole ({p.message})"
        print(f"  eps = {p.eps:+.4f}: {tag}")
    moduli.surface_to_csv(points, out / "surface.csv")

    levi_s = moduli.levi_from_surface(points, 0.0, a)
    print(f"Levi form of S: {levi_s:.6f}; of the potential -S/2: {-0.5 * levi_s:.6f} "
          "(the latter is positive on the regular locus)")


if __name__ == "__main__":
    main()
