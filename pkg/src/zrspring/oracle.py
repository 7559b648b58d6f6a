"""Backward-Euler reference integrator for the spring ODE.

Used two ways: as an independent check on the closed-form solver, and as the
stand-in "dynamic simulation" that produces ground truth for fitting.
"""

from dataclasses import dataclass

import numpy as np

from .kinematics import build_intervals, eval_target, eval_target_velocity
from .spring import ParticleState, _expand, initial_state


@dataclass(frozen=True)
class GroundTruthTrack:
    positions: np.ndarray  # (N, ..., 3), aligned with the target track
    dt: float
    spiked: np.ndarray = None  # frame indices that were corrupted


def be_step(state, target_pos, target_vel, params, h):
    """One fully implicit step with the target sampled at the end of the step.

    Eliminating ``x' = x + h v'`` leaves a scalar equation per axis,
    ``v' (1 + h kd + h^2 ks) = v + h (ks (xhat' - x) + kd xhat_dot')``.
    """
    ks, kd = _expand(params.ks), _expand(params.kd)
    v_new = (state.v + h * (ks * (target_pos - state.x) + kd * target_vel)) / (
        1.0 + h * kd + h * h * ks
    )
    return ParticleState(state.x + h * v_new, v_new)


def be_simulate(track, params, init=None, substeps=100):
    """Backward Euler through the cubic target with ``substeps`` steps per frame.

    Returns the states at the sample times, stacked frame-first like
    :func:`zrspring.spring.step_sequence`.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    if init is None:
        init = initial_state(track)
    ivs = build_intervals(track)
    dt = track.dt
    h = dt / substeps
    N = track.n_frames
    shape = np.broadcast_shapes(track.positions.shape[1:], np.shape(params.ks) + (3,))
    xs, vs = np.empty((N,) + shape), np.empty((N,) + shape)
    state = ParticleState(np.broadcast_to(init.x, shape), np.broadcast_to(init.v, shape))
    xs[0], vs[0] = state.x, state.v
    s_end = np.arange(1, substeps + 1) / substeps
    ks, kd = _expand(params.ks), _expand(params.kd)
    inv_den = 1.0 / (1.0 + h * kd + h * h * ks)
    hks = h * ks
    x, v = state.x.copy(), state.v.copy()
    for n in range(N - 1):
        iv = ivs[n]
        # forcing term of the implicit solve for every substep of the interval
        xh = _sample(iv, s_end, eval_target)
        vh = _sample(iv, s_end, lambda iv_, s: eval_target_velocity(iv_, s, dt))
        force = h * (ks * xh + kd * vh)
        for j in range(substeps):
            v = (v + force[j] - hks * x) * inv_den
            x = x + h * v
        xs[n + 1], vs[n + 1] = x, v
    return ParticleState(xs, vs)


def _sample(iv, s, fn):
    # evaluate at every s with the substep axis leading
    shape = (len(s),) + (1,) * (iv.q.ndim - 1)
    return fn(iv, s.reshape(shape))


def synth_truth(
    track,
    params,
    init=None,
    substeps=100,
    spike_fraction=0.0,
    spike_magnitude=0.0,
    seed=0,
):
    """Backward-Euler ground truth, optionally with gross outlier frames.

    ``floor(spike_fraction * N)`` frames (chosen without replacement, the same
    set for every particle in a batch) are displaced per particle by random
    directions of length ``spike_magnitude``.
    """
    if not 0.0 <= spike_fraction < 1.0:
        raise ValueError("spike_fraction must lie in [0, 1)")
    x = be_simulate(track, params, init, substeps).x.copy()
    N = x.shape[0]
    n_spikes = int(np.floor(spike_fraction * N))
    rng = np.random.default_rng(seed)
    frames = np.sort(rng.choice(N, size=n_spikes, replace=False))
    if n_spikes:
        direction = rng.normal(size=(n_spikes,) + x.shape[1:])
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        x[frames] += spike_magnitude * direction
    return GroundTruthTrack(x, track.dt, frames)
