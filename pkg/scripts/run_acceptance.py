"""Run the exit criteria and print one line per criterion; exit 1 if any fails."""

import argparse
import sys

from georay.acceptance import run_all


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--only", type=int, action="append")
    args = p.parse_args()
    results = run_all(args.only)
    sys.exit(0 if all(c.passed for c in results) else 1)


if __name__ == "__main__":
    main()
