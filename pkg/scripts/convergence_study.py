"""Deviation between the two integrators as the step halves, on an isotropic and an anisotropic metric."""

import argparse
import math

from georay.geodesic import convergence_study
from georay.metric import builtin_metric

CASES = {
    "poincare_half_plane": ({}, [0.0, 1.0], [1.0, 0.0]),
    "sphere": ({}, [math.pi / 3, 0.0], [0.6, 0.8]),
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--h0", type=float, default=8e-3)
    p.add_argument("--halvings", type=int, default=4)
    p.add_argument("--max-S", type=float, default=2.0)
    args = p.parse_args()
    steps = [args.h0 / 2**k for k in range(args.halvings + 1)]
    for name, (params, x0, u0) in CASES.items():
        table = convergence_study(builtin_metric(name, params), x0, u0, steps, args.max_S)
        print(f"{name}: {table.verdict}")
        print(f"{'h':>10} {'max dist':>12} {'max angle':>12} {'order':>7}")
        for r in table.rows:
            order = "" if r.order is None else f"{r.order:.2f}"
            print(f"{r.h:10.2e} {r.max_distance:12.3e} {r.max_angle:12.3e} {order:>7}")
        print()


if __name__ == "__main__":
    main()
