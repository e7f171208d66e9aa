"""Refraction angle error across a tanh index step, swept over incidence angles."""

import argparse

import numpy as np

from georay.geodesic import FORMS
from georay.snell import snell_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n1", type=float, default=1.0)
    p.add_argument("--n2", type=float, default=1.5)
    p.add_argument("--width", type=float, default=0.01)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--angles", type=float, nargs="+", default=list(np.arange(10.0, 70.0, 10.0)))
    args = p.parse_args()
    print(f"{'angle':>6} {'form':>12} {'expected':>10} {'measured':>10} {'error':>10}")
    for angle in args.angles:
        for form in FORMS:
            res, _ = snell_experiment(args.n1, args.n2, angle, width=args.width, h=args.h, form=form)
            print(f"{angle:6.1f} {form:>12} {res.expected_deg:10.5f} {res.refracted_deg:10.5f} {res.error_deg:10.2e}")


if __name__ == "__main__":
    main()
