"""Forward-mode sensitivities of the closed-form trajectory w.r.t. ks and kd.

The state at the start of each interval depends on the parameters through
every earlier interval, so the partials of position and velocity are carried
across interval boundaries alongside the state itself.

Writing the homogeneous part as ``g = gamma1 C(u) + gamma2 tau S(u)`` with
``u = tau^2 (kd^2/4 - ks)`` (see :mod:`zrspring.spring`), the only
parameter-dependence of ``g`` beyond the gammas is through ``u``, and

    dg/du = (gamma1 S + gamma2 tau H) / 2

which is the product ``(1/eps dg/deps) (eps deps/dk)`` split so that both
factors stay finite as ``eps -> 0``.  Velocity partials differentiate
``g' = gamma1 tau w S + gamma2 C`` the same way.
"""

from dataclasses import dataclass

import numpy as np

from .kinematics import build_intervals
from .spring import (
    Gammas,
    ParticleState,
    Regime,
    _expand,
    basis,
    initial_state,
    particular,
)


@dataclass(frozen=True)
class SensitivityState:
    """Partials of position and velocity; a stacked history indexes by frame."""

    dx_dks: np.ndarray
    dv_dks: np.ndarray
    dx_dkd: np.ndarray
    dv_dkd: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(*(np.zeros(shape) for _ in range(4)))

    def __getitem__(self, idx):
        return SensitivityState(
            self.dx_dks[idx], self.dv_dks[idx], self.dx_dkd[idx], self.dv_dkd[idx]
        )


@dataclass(frozen=True)
class GammaSensitivity:
    dg1_dks: np.ndarray
    dg1_dkd: np.ndarray
    dg2_dks: np.ndarray
    dg2_dkd: np.ndarray


def dparticular(iv, params, s, dt):
    """``(dp/dks, dp/dkd, dpdot/dks, dpdot/dkd)`` at ``s``."""
    ks, kd = _expand(params.ks), _expand(params.kd)
    s_ = _expand(s)
    jerk = 6.0 * iv.q / (ks * ks * dt**3)
    dp_dks = (6.0 * iv.q * s_ + 2.0 * iv.a) / (ks * ks * dt * dt) - 2.0 * kd * jerk / ks
    dp_dkd = jerk
    dpdot_dks = jerk
    dpdot_dkd = np.zeros_like(jerk)
    return dp_dks, dp_dkd, dpdot_dks, dpdot_dkd


def epsilon_products(params, regime, s, dt):
    """``(eps deps/dks, eps deps/dkd)`` for a non-critical regime.

    Both are polynomial in ``s dt`` and hence safe at ``eps = 0``.  In the
    critical regime ``eps`` is identically zero and the products have no
    meaning; callers take the shared limit instead.
    """
    kind = regime.kind if hasattr(regime, "kind") else regime
    if kind is Regime.CRITICAL:
        raise ValueError("epsilon products are undefined on the critical manifold")
    t2 = (np.asarray(s, dtype=float) * dt) ** 2
    sign = -1.0 if kind is Regime.OVERDAMPED else 1.0
    return sign * 0.5 * t2, -sign * 0.25 * t2 * np.asarray(params.kd, dtype=float)


def dgammas(sens, gam, iv, params, dt):
    """Partials of the interval's gammas from the incoming sensitivities."""
    dp_dks, dp_dkd, dpd_dks, dpd_dkd = dparticular(iv, params, 0.0, dt)
    half_kd = 0.5 * _expand(params.kd)
    dg1_dks = sens.dx_dks - dp_dks
    dg1_dkd = sens.dx_dkd - dp_dkd
    dg2_dks = sens.dv_dks + half_kd * dg1_dks - dpd_dks
    dg2_dkd = sens.dv_dkd + half_kd * dg1_dkd + 0.5 * gam.g1 - dpd_dkd
    return GammaSensitivity(dg1_dks, dg1_dkd, dg2_dks, dg2_dkd)


def _grad_core(gam, dgam, iv, params, s, dt, cache):
    EC, ES, EH, w = (_expand(t) for t in cache)
    tau = _expand(np.asarray(s, dtype=float) * dt)
    kd = _expand(params.kd)
    half_kd = 0.5 * kd
    g1, g2 = gam.g1, gam.g2

    eg = g1 * EC + g2 * (tau * ES)
    egp = g1 * (tau * w * ES) + g2 * EC
    # half of d(E g)/du and d(E g')/du at fixed gammas
    dg_du = 0.5 * (g1 * ES + g2 * (tau * EH))
    dgp_du_w = 0.5 * g1 * (tau * w * EH) + 0.5 * g2 * ES

    tau2 = tau * tau
    du_dks, du_dkd = -tau2, tau2 * half_kd

    def homog(dg1, dg2, du, dw):
        d_eg = dg1 * EC + dg2 * (tau * ES) + dg_du * du
        d_egp = dg1 * (tau * w * ES) + g1 * (tau * dw * ES) + dgp_du_w * du + dg2 * EC
        return d_eg, d_egp

    d_eg_s, d_egp_s = homog(dgam.dg1_dks, dgam.dg2_dks, du_dks, -1.0)
    d_eg_d, d_egp_d = homog(dgam.dg1_dkd, dgam.dg2_dkd, du_dkd, half_kd)
    # the decay factor itself depends on kd
    d_eg_d = d_eg_d - 0.5 * tau * eg
    d_egp_d = d_egp_d - 0.5 * tau * egp

    dp_dks, dp_dkd, dpd_dks, dpd_dkd = dparticular(iv, params, s, dt)
    dx_dks = d_eg_s + dp_dks
    dx_dkd = d_eg_d + dp_dkd
    dv_dks = d_egp_s - half_kd * d_eg_s + dpd_dks
    dv_dkd = d_egp_d - half_kd * d_eg_d - 0.5 * eg + dpd_dkd
    return dx_dks, dx_dkd, dv_dks, dv_dkd


def grad_eval(gam, dgam, iv, params, s, dt):
    """Partials ``(dx/dks, dx/dkd, dv/dks, dv/dkd)`` at ``s`` in the interval."""
    cache = basis(params.ks, params.kd, np.asarray(s, dtype=float) * dt)
    return _grad_core(gam, dgam, iv, params, s, dt, cache)


def _step_with_sens(state, sens, iv, params, dt, cache):
    EC, ES, _, w = (_expand(t) for t in cache)
    half_kd = 0.5 * _expand(params.kd)
    p0, pd0 = particular(iv, params, 0.0, dt)
    p1, pd1 = particular(iv, params, 1.0, dt)
    g1 = state.x - p0
    g2 = state.v + half_kd * g1 - pd0
    gam = Gammas(g1, g2)
    eg = g1 * EC + g2 * (dt * ES)
    egp = g1 * (dt * w * ES) + g2 * EC
    new_state = ParticleState(eg + p1, egp - half_kd * eg + pd1)
    dgam = dgammas(sens, gam, iv, params, dt)
    dx_dks, dx_dkd, dv_dks, dv_dkd = _grad_core(gam, dgam, iv, params, 1.0, dt, cache)
    return new_state, SensitivityState(dx_dks, dv_dks, dx_dkd, dv_dkd)


def propagate_sequence(track, params, init=None):
    """Trajectory plus per-frame sensitivities, both stacked frame-first.

    The initial state is treated as parameter-independent, so frame 0 has
    zero sensitivity.
    """
    if init is None:
        init = initial_state(track)
    ivs = build_intervals(track)
    dt = track.dt
    N = track.n_frames
    shape = np.broadcast_shapes(track.positions.shape[1:], np.shape(params.ks) + (3,))
    xs, vs = np.empty((N,) + shape), np.empty((N,) + shape)
    out = [np.zeros((N,) + shape) for _ in range(4)]
    xs[0], vs[0] = init.x, init.v
    state = ParticleState(xs[0], vs[0])
    sens = SensitivityState.zeros(shape)
    cache = basis(params.ks, params.kd, dt)
    for n in range(N - 1):
        state, sens = _step_with_sens(state, sens, ivs[n], params, dt, cache)
        xs[n + 1], vs[n + 1] = state.x, state.v
        out[0][n + 1], out[1][n + 1] = sens.dx_dks, sens.dv_dks
        out[2][n + 1], out[3][n + 1] = sens.dx_dkd, sens.dv_dkd
    return ParticleState(xs, vs), SensitivityState(*out)
