"""Trajectory and fit-report files.

Trajectory files start with a short text header::

    ZRTRAJ 1 binary
    frames 120
    particles 13575
    dt 0.03333333333333333
    kind target
    end

followed by ``frames * particles * 3`` float64 values, frame-major then
particle then axis.  The ``binary`` encoding stores them little-endian
directly after the ``end`` line; the ``text`` encoding writes one particle
per line as three ``%.17g`` numbers, which reads back bit-exactly.

Fit reports are JSON with one record per particle.
"""

from dataclasses import dataclass
import json

import numpy as np

from .kinematics import SampleTrack

MAGIC = "ZRTRAJ"
VERSION = 1
KINDS = ("target", "truth", "output")
_HEADER_KEYS = ("frames", "particles", "dt", "kind")


class TrajectoryFormatError(ValueError):
    """Base class for unreadable trajectory files."""


class MalformedHeaderError(TrajectoryFormatError):
    pass


class TruncatedPayloadError(TrajectoryFormatError):
    pass


class NonFiniteValueError(TrajectoryFormatError):
    pass


@dataclass
class TrajectorySet:
    positions: np.ndarray  # (N, V, 3)
    dt: float
    kind: str = "target"

    @property
    def n_frames(self):
        return self.positions.shape[0]

    @property
    def n_particles(self):
        return self.positions.shape[1]

    def to_track(self):
        return SampleTrack(self.positions, self.dt)


def write_trajectory(path, data, encoding="binary"):
    pos = np.asarray(data.positions, dtype=float)
    if pos.ndim != 3 or pos.shape[-1] != 3:
        raise ValueError(f"positions must be (N, V, 3), got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("refusing to write non-finite positions")
    if encoding not in ("binary", "text"):
        raise ValueError(f"unknown encoding {encoding!r}")
    if data.kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    header = (
        f"{MAGIC} {VERSION} {encoding}\n"
        f"frames {pos.shape[0]}\n"
        f"particles {pos.shape[1]}\n"
        f"dt {float(data.dt)!r}\n"
        f"kind {data.kind}\n"
        "end\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if encoding == "binary":
            fh.write(pos.astype("<f8").tobytes())
        else:
            lines = ["%.17g %.17g %.17g\n" % tuple(p) for p in pos.reshape(-1, 3)]
            fh.write("".join(lines).encode("ascii"))


def _parse_header(fh):
    first = fh.readline().decode("ascii", "replace").split()
    if len(first) != 3 or first[0] != MAGIC:
        raise MalformedHeaderError("missing ZRTRAJ magic line")
    if first[1] != str(VERSION):
        raise MalformedHeaderError(f"unsupported version {first[1]}")
    encoding = first[2]
    if encoding not in ("binary", "text"):
        raise MalformedHeaderError(f"unknown encoding {encoding!r}")
    fields = {}
    while True:
        raw = fh.readline()
        if not raw:
            raise MalformedHeaderError("header not terminated by 'end'")
        line = raw.decode("ascii", "replace").strip()
        if line == "end":
            break
        parts = line.split()
        if len(parts) != 2 or parts[0] not in _HEADER_KEYS:
            raise MalformedHeaderError(f"bad header line {line!r}")
        fields[parts[0]] = parts[1]
    missing = [k for k in _HEADER_KEYS if k not in fields]
    if missing:
        raise MalformedHeaderError(f"header missing {', '.join(missing)}")
    try:
        n, v, dt = int(fields["frames"]), int(fields["particles"]), float(fields["dt"])
    except ValueError as exc:
        raise MalformedHeaderError(str(exc)) from None
    if n < 1 or v < 0 or not (np.isfinite(dt) and dt > 0):
        raise MalformedHeaderError("frames must be >= 1, particles >= 0 and dt > 0")
    if fields["kind"] not in KINDS:
        raise MalformedHeaderError(f"unknown kind {fields['kind']!r}")
    return encoding, n, v, dt, fields["kind"]


def read_trajectory(path):
    with open(path, "rb") as fh:
        encoding, n, v, dt, kind = _parse_header(fh)
        body = fh.read()
    count = n * v * 3
    if encoding == "binary":
        if len(body) != 8 * count:
            raise TruncatedPayloadError(
                f"expected {count} float64 values ({8 * count} bytes), found {len(body)} bytes"
            )
        values = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        try:
            values = np.array(body.split(), dtype=float)
        except ValueError as exc:
            raise TrajectoryFormatError(f"unparseable payload: {exc}") from None
        if values.size != count:
            raise TruncatedPayloadError(f"expected {count} values, found {values.size}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("payload contains NaN or infinite values")
    return TrajectorySet(values.reshape(n, v, 3), dt, kind)


# -- fit reports --------------------------------------------------------------


def write_fit_report(path, results, ids=None, dt=None):
    """One JSON record per particle; failed fits keep their error message."""
    ids = list(range(len(results))) if ids is None else [int(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise ValueError("particle ids must be unique")
    records = []
    for pid, r in zip(ids, results, strict=True):
        if r.params is None:
            records.append({"id": pid, "error": r.error})
            continue
        ks, kd = float(r.params.ks), float(r.params.kd)
        records.append(
            {
                "id": pid,
                "ks": ks,
                "kd": kd,
                "regime": r.regime.kind.value,
                "discriminant": kd * kd - 4.0 * ks,
                "final_loss": float(r.final_loss),
                "dropped_frames": [int(f) for f in r.dropped_frames],
                "converged": bool(r.converged),
            }
        )
    doc = {
        "format": "zrspring-fit-report",
        "version": VERSION,
        "dt": dt,
        # slope rule used at the first and last sample of every target
        "end_differences": "one-sided",
        "particles": records,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_fit_report(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"fit report is not valid JSON: {exc}") from None
    if doc.get("format") != "zrspring-fit-report":
        raise ValueError("not a fit report")
    records = doc["particles"]
    ids = [r["id"] for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate particle ids in fit report")
    return records


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            values[key] = val
    return values
