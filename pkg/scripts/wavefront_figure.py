"""SVG of a geodesic fan with wavefronts and the Huygens discs of one front."""

import argparse

import numpy as np

from georay.metric import builtin_metric
from georay.output import emit_svg
from georay.wavefront import huygens_tangency_check, level_set, trace_fan

LENS = {"amplitude": 0.5, "width": 1.0}
CASES = {
    "poincare_half_plane": ({}, [0.0, 1.0]),
    "isotropic_index": (LENS, [-3.0, 0.0]),
}


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--metric", choices=sorted(CASES), default="poincare_half_plane")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--max-S", type=float, default=1.5)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--out", default="wavefront.svg")
    args = p.parse_args()
    params, x0 = CASES[args.metric]
    fan = trace_fan(builtin_metric(args.metric, params), x0, args.count, h=args.h, max_S=args.max_S)
    fronts = [level_set(fan, S) for S in np.linspace(0.25, args.max_S - 0.25, 5)]
    S1 = 0.5 * args.max_S
    rep = huygens_tangency_check(fan, S1, S1 + 0.02)
    emit_svg(fan.traces, args.out, fronts, rep.discs, title=args.metric)
    print(f"wrote {args.out}; Huygens at S={S1:g}: {'pass' if rep.passed else 'fail'} "
          f"(max penetration {rep.max_penetration:.2e}, tolerance {rep.tol_polyline:.2e})")


if __name__ == "__main__":
    main()
