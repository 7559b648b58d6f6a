"""Command-line driver: synth, fit, simulate, eval, gradcheck, bench.

Exit codes: 0 ok, 2 usage/validation, 3 unreadable input file, 4 gradcheck
failure.
"""

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import io
from .checks import REFERENCE_PARTICLES, bench, gradcheck_sweep
from .fitting import FitConfig, fit_all
from .kinematics import SampleTrack
from .oracle import synth_truth
from .spring import SpringParams, step_sequence

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_GRADCHECK = 0, 2, 3, 4
GRADCHECK_TOL = 1e-5

log = logging.getLogger("zrspring")


class InputError(Exception):
    """A file named on the command line could not be read."""


class UsageError(Exception):
    pass


def parse_particles(spec, count):
    """``"0:10"``, ``"3-7"``, ``"1,4,9"`` or a mix; ``None`` selects all."""
    if spec is None:
        return np.arange(count)
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        sep = ":" if ":" in part else ("-" if "-" in part[1:] else None)
        if sep:
            lo, hi = part.split(sep, 1)
            lo, hi = int(lo), int(hi)
            # a-b is inclusive, a:b is half open
            out.extend(range(lo, hi + 1 if sep == "-" else hi))
        else:
            out.append(int(part))
    idx = np.asarray(out, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= count):
        raise UsageError(f"particle selection {spec!r} outside [0, {count})")
    return idx


def _read_traj(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    try:
        return io.read_trajectory(path)
    except (OSError, io.TrajectoryFormatError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_report(path):
    if path is None:
        raise UsageError("--report is required")
    try:
        return io.read_fit_report(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _config(args):
    values = {}
    if args.config:
        try:
            values = io.read_config(args.config)
        except OSError as exc:
            raise InputError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.drop_fraction is not None:
        values["drop_fraction"] = str(args.drop_fraction)
    try:
        return FitConfig.from_mapping(values)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from None


def _need_out(args):
    if not args.out:
        raise UsageError("--out is required")
    return args.out


def _params_from_report(records, ids):
    by_id = {r["id"]: r for r in records}
    missing = [int(i) for i in ids if int(i) not in by_id or "ks" not in by_id[int(i)]]
    if missing:
        raise InputError(f"fit report has no parameters for particles {missing[:5]}")
    ks = np.array([by_id[int(i)]["ks"] for i in ids], dtype=float)
    kd = np.array([by_id[int(i)]["kd"] for i in ids], dtype=float)
    return SpringParams(ks, kd)


def cmd_synth(args):
    target = _read_traj(args.target, "target")
    V = target.n_particles
    if args.report:
        params = _params_from_report(_read_report(args.report), range(V))
    else:
        if args.ks is None or args.kd is None:
            raise UsageError("synth needs --ks and --kd, or --report")
        params = SpringParams(np.full(V, args.ks), np.full(V, args.kd))
    seed = 0 if args.seed is None else args.seed
    truth = synth_truth(
        target.to_track(),
        params,
        substeps=args.substeps,
        spike_fraction=args.spike_fraction,
        spike_magnitude=args.spike_magnitude,
        seed=seed,
    )
    io.write_trajectory(_need_out(args), io.TrajectorySet(truth.positions, target.dt, "truth"), args.encoding)
    log.info("wrote truth for %d particles (%d spiked frames)", V, len(truth.spiked))
    return EXIT_OK


def cmd_fit(args):
    target = _read_traj(args.target, "target")
    truth = _read_traj(args.truth, "truth")
    if truth.positions.shape != target.positions.shape or truth.dt != target.dt:
        raise InputError("target and truth trajectories are not aligned")
    cfg = _config(args)
    ids = parse_particles(args.particles, target.n_particles)
    out = _need_out(args)
    track = target.to_track()
    results = fit_all(
        SampleTrack(track.positions[:, ids], track.dt), truth.positions[:, ids], cfg
    )
    io.write_fit_report(out, results, ids=ids, dt=target.dt)
    ok = sum(r.params is not None for r in results)
    log.info("fitted %d/%d particles", ok, len(results))
    return EXIT_OK


def cmd_simulate(args):
    target = _read_traj(args.target, "target")
    records = _read_report(args.report)
    ids = parse_particles(args.particles, target.n_particles)
    params = _params_from_report(records, ids)
    track = SampleTrack(target.positions[:, ids], target.dt)
    x = step_sequence(track, params).x
    io.write_trajectory(_need_out(args), io.TrajectorySet(x, target.dt, "output"), args.encoding)
    return EXIT_OK


def cmd_eval(args):
    """Per-frame displacement norms and errors vs truth as CSV."""
    target = _read_traj(args.target, "target")
    other_path = args.sim if args.sim else args.truth
    other = _read_traj(other_path, "sim or --truth")
    if other.positions.shape != target.positions.shape:
        raise InputError("trajectories are not aligned")
    truth = _read_traj(args.truth, "truth") if (args.sim and args.truth) else None
    listed = parse_particles(args.particles, target.n_particles) if args.particles else []

    disp = np.linalg.norm(other.positions - target.positions, axis=-1)
    header = ["frame", "mean_disp"] + [f"disp_{i}" for i in listed]
    cols = [np.arange(target.n_frames), disp.mean(axis=1)] + [disp[:, i] for i in listed]
    if truth is not None:
        err = np.linalg.norm(other.positions - truth.positions, axis=-1)
        header += ["mean_err"] + [f"err_{i}" for i in listed]
        cols += [err.mean(axis=1)] + [err[:, i] for i in listed]
        rms = float(np.sqrt(np.mean(np.sum((other.positions - truth.positions) ** 2, -1))))
        print(f"rms error vs truth: {rms:.6g}")
    with open(_need_out(args), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return EXIT_OK


def cmd_gradcheck(args):
    seed = 7 if args.seed is None else args.seed
    cases = gradcheck_sweep(seed=seed, n_cases=args.cases)
    worst = max(c.rel_error for c in cases)
    print(f"gradcheck: {len(cases)} cases, max relative error {worst:.3e}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"seed": seed, "cases": len(cases), "max_rel_error": worst}, fh)
            fh.write("\n")
    return EXIT_OK if worst <= GRADCHECK_TOL else EXIT_GRADCHECK


def cmd_bench(args):
    n = args.n_particles
    res = bench(n_particles=n, repeats=args.repeats, seed=0 if args.seed is None else args.seed)
    fps_ref = res["particle_steps_per_second"] / REFERENCE_PARTICLES
    print(
        f"{res['particle_steps_per_second']:.4g} particle-steps/s; "
        f"{fps_ref:.1f} fps at {REFERENCE_PARTICLES} particles"
    )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(dict(res, fps_at_reference=fps_ref), fh, indent=1)
            fh.write("\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="zrspring", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        # also accepted after the subcommand
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--target")
        sp.add_argument("--truth")
        sp.add_argument("--out")
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--drop-fraction", type=float)
        sp.add_argument("--substeps", type=int, default=100)
        sp.add_argument("--particles")
        sp.add_argument("--encoding", choices=("binary", "text"), default="binary")
        return sp

    s = common(sub.add_parser("synth", help="backward-Euler ground truth from a target"))
    s.add_argument("--ks", type=float)
    s.add_argument("--kd", type=float)
    s.add_argument("--report", help="take per-particle parameters from a fit report")
    s.add_argument("--spike-fraction", type=float, default=0.0)
    s.add_argument("--spike-magnitude", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    common(sub.add_parser("fit", help="learn ks, kd per particle")).set_defaults(func=cmd_fit)

    s = common(sub.add_parser("simulate", help="run fitted springs over a target"))
    s.add_argument("--report", help="fit report with the parameters")
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("eval", help="per-frame displacement/error CSV"))
    s.add_argument("--sim", help="simulated output; displacements are measured from it")
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("gradcheck", help="analytic vs finite-difference gradients"))
    s.add_argument("--cases", type=int, default=120)
    s.set_defaults(func=cmd_gradcheck)

    s = common(sub.add_parser("bench", help="time one frame of spring stepping"))
    s.add_argument("--n-particles", type=int, default=REFERENCE_PARTICLES)
    s.add_argument("--repeats", type=int, default=20)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # invalid values that got past argparse (e.g. nonpositive ks)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
