"""Closed-form integration of a zero-restlength spring chasing a cubic target.

Per particle, with mass-normalised stiffness ``ks`` and damping ``kd``::

    x'' = ks (xhat - x) + kd (xhat' - x')

Over one interval the solution is ``x = exp(-kd tau / 2) g(tau) + p(tau)``
where ``tau = s dt``, ``p`` is the polynomial particular solution and ``g``
is the homogeneous part fixed by two vectors ``gamma1``, ``gamma2``.

All three damping regimes are handled through the signed quantity
``u = tau^2 (kd^2/4 - ks)``: with ``eps = sqrt(|u|)``,

    C(u) = cosh(eps)   or cos(eps)      (both 1 at u = 0)
    S(u) = sinh(eps)/eps or sin(eps)/eps
    H(u) = h_over(eps) or h_under(eps)  (both 1/3 at u = 0)

so that ``g = gamma1 C + gamma2 tau S``, ``dC/du = S/2``, ``dS/du = H/2``.
The functions are entire in ``u``, which is what makes positions, velocities
and parameter gradients continuous across critical damping.

Arrays broadcast: params carry a batch shape ``B`` and vectors are ``B + (3,)``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .kinematics import (
    CubicInterval,
    all_differences,
    build_intervals,
    eval_target,
    eval_target_velocity,
)
from .special import cosh_e, h_over, h_under, sinc_e, sinhc

CRITICAL_TOL = 1e-9
# above this eps the overdamped terms are formed from combined exponents
_EXP_SCALED_EPS = 1.0


class Regime(Enum):
    OVERDAMPED = "overdamped"
    UNDERDAMPED = "underdamped"
    CRITICAL = "critical"


@dataclass(frozen=True)
class SpringParams:
    """Mass-normalised stiffness (1/s^2) and damping (1/s); scalars or arrays."""

    ks: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        ks = np.asarray(self.ks, dtype=float)
        kd = np.asarray(self.kd, dtype=float)
        if not (np.all(np.isfinite(ks)) and np.all(np.isfinite(kd))):
            raise ValueError("spring parameters must be finite")
        if np.any(ks <= 0):
            raise ValueError("ks must be positive")
        if np.any(kd < 0):
            raise ValueError("kd must be nonnegative")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "kd", kd)

    @property
    def discriminant(self):
        """kd^2 - 4 ks."""
        return self.kd**2 - 4.0 * self.ks

    def __getitem__(self, idx):
        return SpringParams(self.ks[idx], self.kd[idx])


@dataclass(frozen=True)
class DampingRegime:
    kind: Regime
    omega2: float  # |kd^2 - 4 ks|


@dataclass(frozen=True)
class ParticleState:
    """Position and velocity; a stacked trajectory indexes by frame."""

    x: np.ndarray
    v: np.ndarray

    def __getitem__(self, idx):
        return ParticleState(self.x[idx], self.v[idx])

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class Gammas:
    g1: np.ndarray
    g2: np.ndarray


def classify(params, tol=CRITICAL_TOL):
    """Damping regime of a single (scalar) parameter pair."""
    disc = float(params.discriminant)
    scale = tol * 4.0 * float(params.ks)
    if disc > scale:
        kind = Regime.OVERDAMPED
    elif disc < -scale:
        kind = Regime.UNDERDAMPED
    else:
        kind = Regime.CRITICAL
    return DampingRegime(kind, abs(disc))


def regime_labels(params, tol=CRITICAL_TOL):
    """Vectorised ``classify``; returns an array of label strings."""
    disc = params.discriminant
    scale = tol * 4.0 * params.ks
    return np.where(
        disc > scale,
        Regime.OVERDAMPED.value,
        np.where(disc < -scale, Regime.UNDERDAMPED.value, Regime.CRITICAL.value),
    )


def _expand(x):
    return np.asarray(x, dtype=float)[..., None]


def basis(ks, kd, tau):
    """Damped homogeneous basis ``(E*C, E*S, E*H, w)`` with ``E = exp(-kd tau/2)``.

    ``w = kd^2/4 - ks``.  Numerics follow the exact sign of ``w``; the
    classification tolerance only affects reporting, never values.  For large
    overdamped ``eps`` the growing exponential is folded into ``E`` so nothing
    overflows however stiff or slow the spring is.
    """
    ks = np.asarray(ks, dtype=float)
    kd = np.asarray(kd, dtype=float)
    tau = np.asarray(tau, dtype=float)
    w = 0.25 * kd * kd - ks
    eps = tau * np.sqrt(np.abs(w))
    decay = np.exp(-0.5 * kd * tau)

    over = w > 0
    under = w < 0

    cu, su, hu = np.cos(eps), sinc_e(eps), h_under(eps)

    small = np.minimum(eps, _EXP_SCALED_EPS)
    co, so, ho = cosh_e(small), sinhc(small), h_over(small)
    big = over & (eps > _EXP_SCALED_EPS)
    if np.any(big):
        # eps - kd tau/2, written without cancellation
        root = np.sqrt(np.maximum(w, 0.0))
        denom = np.where(big, 2.0 * root + kd, 1.0)
        lead = np.exp(-2.0 * ks * tau / denom)
        m = np.exp(-2.0 * eps)
        e_safe = np.where(big, eps, 1.0)
        ec_big = 0.5 * lead * (1.0 + m)
        es_big = 0.5 * lead * (1.0 - m) / e_safe
        eh_big = 0.5 * lead * ((e_safe - 1.0) + (e_safe + 1.0) * m) / e_safe**3

    C = np.where(over, co, np.where(under, cu, 1.0))
    S = np.where(over, so, np.where(under, su, 1.0))
    H = np.where(over, ho, np.where(under, hu, 1.0 / 3.0))
    EC, ES, EH = decay * C, decay * S, decay * H
    if np.any(big):
        EC = np.where(big, ec_big, EC)
        ES = np.where(big, es_big, ES)
        EH = np.where(big, eh_big, EH)
    return EC, ES, EH, w


def particular(iv, params, s, dt):
    """Particular solution ``p`` and its time derivative at ``s``.

    ``p = xhat - xhat''/ks + kd xhat'''/ks^2``; with a cubic target every
    higher derivative vanishes.
    """
    ks, kd = _expand(params.ks), _expand(params.kd)
    s_ = _expand(s)
    acc = (6.0 * iv.q * s_ + 2.0 * iv.a) / (ks * dt * dt)
    jerk_term = 6.0 * iv.q / (ks * dt**3)
    p = eval_target(iv, s) - acc + kd * jerk_term / ks
    pdot = eval_target_velocity(iv, s, dt) - jerk_term
    return p, pdot


def gammas(state, iv, params, dt):
    """Homogeneous coefficients from the state at the start of the interval."""
    p0, pdot0 = particular(iv, params, 0.0, dt)
    g1 = state.x - p0
    g2 = state.v + 0.5 * _expand(params.kd) * g1 - pdot0
    return Gammas(g1, g2)


def eval_state(gam, iv, params, s, dt):
    """Position and velocity at ``s`` within the interval."""
    tau = np.asarray(s, dtype=float) * dt
    EC, ES, EH, w = basis(params.ks, params.kd, tau)
    EC, ES, w, tau_ = _expand(EC), _expand(ES), _expand(w), _expand(tau)
    half_kd = 0.5 * _expand(params.kd)
    eg = gam.g1 * EC + gam.g2 * (tau_ * ES)
    # g' = gamma1 tau w S + gamma2 C
    egp = gam.g1 * (tau_ * w * ES) + gam.g2 * EC
    p, pdot = particular(iv, params, s, dt)
    return ParticleState(eg + p, egp - half_kd * eg + pdot)


def initial_state(track):
    """Particle resting on the target with the target's velocity at frame 0."""
    d = all_differences(track)
    return ParticleState(track.positions[0].copy(), d[0] / track.dt)


def step_sequence(track, params, init=None):
    """States at every sample time, frame axis first (frame 0 is ``init``).

    ``track`` positions may be ``(N, 3)`` or ``(N, V, 3)``; params broadcast
    against the batch axes.
    """
    if init is None:
        init = initial_state(track)
    ivs = build_intervals(track)
    dt = track.dt
    N = track.n_frames
    shape = np.broadcast_shapes(track.positions.shape[1:], np.shape(params.ks) + (3,))
    xs = np.empty((N,) + shape)
    vs = np.empty((N,) + shape)
    xs[0] = init.x
    vs[0] = init.v

    # s = 1 for every interval, so the basis is shared by all of them
    cache = basis(params.ks, params.kd, dt)
    state = init
    for n in range(N - 1):
        state = step_frame(state, ivs[n], params, dt, cache)
        xs[n + 1] = state.x
        vs[n + 1] = state.v
    return ParticleState(xs, vs)


def step_frame(state, iv, params, dt, cache=None):
    """Advance a batch of particles by one frame interval (real-time path).

    ``cache`` may hold the result of ``basis(ks, kd, dt)`` to skip the
    transcendental work when parameters are fixed across frames.
    """
    if cache is None:
        cache = basis(params.ks, params.kd, dt)
    EC, ES, _, w = (_expand(t) for t in cache)
    half_kd = 0.5 * _expand(params.kd)
    p0, pd0 = particular(iv, params, 0.0, dt)
    p1, pd1 = particular(iv, params, 1.0, dt)
    g1 = state.x - p0
    g2 = state.v + half_kd * g1 - pd0
    eg = g1 * EC + g2 * (dt * ES)
    egp = g1 * (dt * w * ES) + g2 * EC
    return ParticleState(eg + p1, egp - half_kd * eg + pd1)
