#!/usr/bin/env python3
"""Summarise damping regimes in a fit report.

Counts particles per regime and prints a text histogram of the damping ratio
kd / (2 sqrt(ks)) on a log scale.

    python3 scripts/regime_map.py report.json
"""

import argparse
from collections import Counter

import numpy as np

from zrspring.io import read_fit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("report")
    ap.add_argument("--bins", type=int, default=8)
    args = ap.parse_args()
    recs = [r for r in read_fit_report(args.report) if "ks" in r]
    failed = sum(1 for r in read_fit_report(args.report) if "error" in r)
    print(f"{len(recs)} fitted particles, {failed} failed")
    for regime, n in sorted(Counter(r["regime"] for r in recs).items()):
        print(f"  {regime:12s} {n}")
    zeta = np.array([r["kd"] / (2 * np.sqrt(r["ks"])) for r in recs])
    zeta = zeta[zeta > 0]
    if zeta.size:
        # fixed range so reports are comparable; the end bins absorb outliers
        edges = np.linspace(-2.0, 2.0, args.bins + 1)
        counts, _ = np.histogram(np.clip(np.log10(zeta), -2.0, 2.0), bins=edges)
        top = counts.max()
        for c, lo, hi in zip(counts, edges, edges[1:]):
            print(f"  zeta {10**lo:9.3g} - {10**hi:<9.3g} {'#' * int(round(40 * c / top))}")


if __name__ == "__main__":
    main()
