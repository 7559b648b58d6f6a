#!/usr/bin/env python3
"""Backward-Euler error against the closed-form stepper vs substep count.

Prints relative RMS error and the ratio between successive doublings for an
underdamped and an overdamped spring following a smooth track.

    python3 scripts/be_convergence.py --frames 31 --freq 0.5
"""

import argparse

import numpy as np

from zrspring.kinematics import SampleTrack
from zrspring.oracle import be_simulate
from zrspring.spring import SpringParams, classify, step_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=31)
    ap.add_argument("--freq", type=float, default=0.5, help="base frequency of the track in Hz")
    ap.add_argument("--dt", type=float, default=1 / 30)
    ap.add_argument("--ks", type=float, default=100.0)
    ap.add_argument("--kd", type=float, nargs="+", default=[4.0, 40.0])
    ap.add_argument("--substeps", type=int, nargs="+", default=[100, 200, 400, 800, 1600, 3200, 6400, 10000])
    args = ap.parse_args()

    t = np.arange(args.frames) * args.dt
    w = 2 * np.pi * args.freq
    pos = np.stack([np.sin(w * t), 0.5 * np.cos(0.7 * w * t + 1), 0.3 * np.sin(1.3 * w * t + 2)], -1)
    track = SampleTrack(pos, args.dt)
    for kd in args.kd:
        params = SpringParams(args.ks, kd)
        exact = step_sequence(track, params).x
        print(f"ks={args.ks:g} kd={kd:g} ({classify(params).kind.value})")
        prev = None
        for m in args.substeps:
            err = be_simulate(track, params, substeps=m).x - exact
            rel = np.sqrt(np.mean(err**2) / np.mean(exact**2))
            ratio = "" if prev is None else f"  x{rel / prev[1]:.3f} for x{m / prev[0]:.2f} substeps"
            print(f"  {m:>6} substeps  rel RMS {rel:.3e}{ratio}")
            prev = (m, rel)


if __name__ == "__main__":
    main()
