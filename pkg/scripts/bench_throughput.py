#!/usr/bin/env python3
"""Spring-stepping throughput as a function of particle count.

    python3 scripts/bench_throughput.py --counts 1000 13575 50000
"""

import argparse

from zrspring.checks import REFERENCE_PARTICLES, bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--counts", type=int, nargs="+", default=[1000, 5000, REFERENCE_PARTICLES, 50000])
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()
    print(f"{'particles':>10} {'cached fps':>11} {'uncached fps':>13} {'steps/s':>10}")
    for n in args.counts:
        cached = bench(n, repeats=args.repeats, cached_basis=True)
        fresh = bench(n, repeats=args.repeats, cached_basis=False)
        print(f"{n:>10} {cached['fps']:>11.1f} {fresh['fps']:>13.1f} {cached['particle_steps_per_second']:>10.3g}")


if __name__ == "__main__":
    main()
