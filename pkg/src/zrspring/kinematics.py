"""C1 piecewise-cubic target curves through uniformly spaced samples.

Each interval ``[t^n, t^n + dt]`` is parameterised by ``s in [0, 1]`` and the
cubic is stored with the powers of ``dt`` absorbed into its coefficients::

    xhat(t^n + s dt) = q s^3 + a s^2 + b s + c

The end slopes are central differences of the samples (one-sided at both ends
of the track), which makes the curve a uniform Catmull-Rom spline.

Positions may carry arbitrary batch axes between the frame axis and the final
coordinate axis, e.g. ``(N, 3)`` for one particle or ``(N, V, 3)`` for ``V``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SampleTrack:
    """Target positions sampled every ``dt`` seconds, frame axis first."""

    positions: np.ndarray
    dt: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim < 2 or pos.shape[-1] != 3:
            raise ValueError(f"positions must have shape (N, ..., 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("a track needs at least two samples")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("track positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_frames(self):
        return self.positions.shape[0]

    @property
    def batch_shape(self):
        return self.positions.shape[1:-1]

    def particle(self, i):
        """Single-particle view of a ``(N, V, 3)`` track."""
        return SampleTrack(self.positions[:, i], self.dt)


@dataclass(frozen=True)
class CubicInterval:
    """Absorbed cubic coefficients of one interval (each shaped ``(..., 3)``)."""

    q: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __getitem__(self, idx):
        # index the frame axis of a stacked interval set
        return CubicInterval(self.q[idx], self.a[idx], self.b[idx], self.c[idx])

    def __len__(self):
        return len(self.q)


def _check_index(n, size, what):
    if not 0 <= n < size:
        raise IndexError(f"{what} index {n} out of range [0, {size})")


def central_difference(track, n):
    """Slope sample (per frame, not per second) at frame ``n``.

    Interior frames use ``(x[n+1] - x[n-1]) / 2``; the first and last frames
    fall back to one-sided differences.
    """
    N = track.n_frames
    _check_index(n, N, "frame")
    x = track.positions
    if n == 0:
        return x[1] - x[0]
    if n == N - 1:
        return x[N - 1] - x[N - 2]
    return 0.5 * (x[n + 1] - x[n - 1])


def all_differences(track):
    """Every ``central_difference`` at once, shape ``(N, ..., 3)``."""
    x = track.positions
    d = np.empty_like(x)
    d[1:-1] = 0.5 * (x[2:] - x[:-2])
    d[0] = x[1] - x[0]
    d[-1] = x[-1] - x[-2]
    return d


def _coefficients(x0, x1, d0, d1):
    return CubicInterval(
        q=2.0 * (x0 - x1) + d0 + d1,
        a=3.0 * (x1 - x0) - 2.0 * d0 - d1,
        b=d0,
        c=x0,
    )


def build_interval(track, n):
    """Cubic for the interval between frames ``n`` and ``n + 1``."""
    _check_index(n, track.n_frames - 1, "interval")
    x = track.positions
    return _coefficients(
        x[n], x[n + 1], central_difference(track, n), central_difference(track, n + 1)
    )


def build_intervals(track):
    """All ``N - 1`` intervals stacked along the leading axis."""
    x = track.positions
    d = all_differences(track)
    return _coefficients(x[:-1], x[1:], d[:-1], d[1:])


def interval_system():
    """Constraint matrix mapping (q, a, b, c) to (x(0), x'(0), x(1), x'(1))."""
    return np.array(
        [
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
            [3.0, 2.0, 1.0, 0.0],
        ]
    )


def eval_target(iv, s):
    """Target position ``q s^3 + a s^2 + b s + c``."""
    s = np.asarray(s, dtype=float)[..., None]
    return ((iv.q * s + iv.a) * s + iv.b) * s + iv.c


def eval_target_velocity(iv, s, dt):
    """Time derivative of the target, ``(3 q s^2 + 2 a s + b) / dt``."""
    s = np.asarray(s, dtype=float)[..., None]
    return ((3.0 * iv.q * s + 2.0 * iv.a) * s + iv.b) / dt
