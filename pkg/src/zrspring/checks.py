"""Seeded verification sweeps shared by the CLI and the test-suite."""

from dataclasses import dataclass
import time

import numpy as np

from .fitting import loss, loss_gradient
from .kinematics import SampleTrack, build_interval
from .spring import ParticleState, SpringParams, basis, initial_state, step_frame, step_sequence

REFERENCE_PARTICLES = 13575


def smooth_track(rng, n_frames, dt, batch=(), n_modes=3):
    """Sum of random low-frequency sinusoids per axis, roughly unit amplitude."""
    t = np.arange(n_frames) * dt
    shape = batch + (3, n_modes)
    freq = rng.uniform(0.2, 2.0, size=shape)
    phase = rng.uniform(0.0, 2 * np.pi, size=shape)
    amp = rng.uniform(0.2, 1.0, size=shape) / n_modes
    arg = 2 * np.pi * freq * t.reshape((-1,) + (1,) * len(shape)) + phase
    return SampleTrack(np.sum(amp * np.sin(arg), axis=-1), dt)


def random_params(rng, regime, delta_range=(1e-8, 1e-2)):
    """Draw (ks, kd) in the requested regime: 'over', 'under' or 'near'."""
    ks = float(np.exp(rng.uniform(np.log(5.0), np.log(5000.0))))
    crit = 2.0 * np.sqrt(ks)
    if regime == "over":
        kd = crit * rng.uniform(1.05, 4.0)
    elif regime == "under":
        kd = crit * rng.uniform(0.02, 0.95)
    else:
        # kd^2 - 4 ks = +-delta * 4 ks
        delta = np.exp(rng.uniform(*np.log(delta_range))) * rng.choice([-1.0, 1.0])
        kd = float(np.sqrt(4.0 * ks * (1.0 + delta)))
    return SpringParams(ks, kd)


@dataclass
class GradCase:
    regime: str
    ks: float
    kd: float
    analytic: tuple
    numeric: tuple
    rel_error: float


def central_difference_grad(track, truth, params, rel_step=1e-6):
    ks, kd = float(params.ks), float(params.kd)
    hs, hd = rel_step * ks, rel_step * kd
    d_ks = (loss(track, truth, SpringParams(ks + hs, kd)) - loss(track, truth, SpringParams(ks - hs, kd))) / (2 * hs)
    d_kd = (loss(track, truth, SpringParams(ks, kd + hd)) - loss(track, truth, SpringParams(ks, kd - hd))) / (2 * hd)
    return d_ks, d_kd


def gradcheck_sweep(seed=7, n_cases=120):
    """Analytic vs central-difference loss gradients on random smooth problems.

    The ground truth for each case is the trajectory of a different spring
    plus noise, so the loss and its gradient are both far from zero.
    """
    rng = np.random.default_rng(seed)
    regimes = ("over", "under", "near")
    cases = []
    for i in range(n_cases):
        regime = regimes[i % 3]
        params = random_params(rng, regime)
        n_frames = int(rng.integers(8, 60))
        dt = float(rng.choice([1 / 30, 1 / 60]))
        track = smooth_track(rng, n_frames, dt)
        other = SpringParams(params.ks * rng.uniform(0.5, 1.5), params.kd * rng.uniform(0.5, 1.5))
        truth = step_sequence(track, other).x + 0.01 * rng.normal(size=track.positions.shape)
        _, a_ks, a_kd = loss_gradient(track, truth, params)
        f_ks, f_kd = central_difference_grad(track, truth, params)
        err = max(abs(a_ks - f_ks) / abs(f_ks), abs(a_kd - f_kd) / abs(f_kd))
        cases.append(GradCase(regime, float(params.ks), float(params.kd), (a_ks, a_kd), (f_ks, f_kd), err))
    return cases


def bench(n_particles=REFERENCE_PARTICLES, repeats=20, seed=0, cached_basis=True):
    """Time one frame of stepping for ``n_particles`` particles.

    Each timed frame builds the cubic for the current interval from four
    samples and advances every particle.  Returns particle-steps per second
    and the equivalent frames per second at ``n_particles``.
    """
    rng = np.random.default_rng(seed)
    track = smooth_track(rng, 4, 1 / 30, batch=(n_particles,))
    params = SpringParams(
        np.exp(rng.uniform(np.log(10), np.log(1000), n_particles)),
        rng.uniform(0.1, 40.0, n_particles),
    )
    state = initial_state(track)
    cache = basis(params.ks, params.kd, track.dt) if cached_basis else None
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        iv = build_interval(track, 1)
        state = step_frame(state, iv, params, track.dt, cache)
        times.append(time.perf_counter() - t0)
    assert np.all(np.isfinite(state.x))
    per_frame = float(np.median(times))
    return {
        "particles": n_particles,
        "seconds_per_frame": per_frame,
        "particle_steps_per_second": n_particles / per_frame,
        "fps": 1.0 / per_frame,
    }


@dataclass(frozen=True)
class RecoveryConfig:
    n_particles: int = 100
    n_frames: int = 120
    dt: float = 1 / 30
    ks_range: tuple = (20.0, 2000.0)
    zeta_range: tuple = (0.05, 3.0)  # damping ratio kd / (2 sqrt(ks))
    substeps: int = 1000
    spike_fraction: float = 0.1
    spike_magnitude: float = 1.0
    drop_fraction: float = 0.1
    seed: int = 3


def recovery_experiment(cfg=RecoveryConfig(), fit_cfg=None, spikes=True):
    """Fit springs to backward-Euler ground truth generated from known params.

    Returns a dict of per-particle relative errors ``max(|ks/ks*-1|, |kd/kd*-1|)``
    for the clean fit and, if ``spikes``, for the plain and robust fits to the
    spike-corrupted truth.
    """
    from .fitting import FitConfig, fit_all, with_drop
    from .oracle import synth_truth

    fit_cfg = FitConfig() if fit_cfg is None else fit_cfg
    rng = np.random.default_rng(cfg.seed)
    V = cfg.n_particles
    track = smooth_track(rng, cfg.n_frames, cfg.dt, batch=(V,))
    ks = np.exp(rng.uniform(*np.log(cfg.ks_range), V))
    zeta = np.exp(rng.uniform(*np.log(cfg.zeta_range), V))
    true = SpringParams(ks, zeta * 2.0 * np.sqrt(ks))

    def errors(results):
        fitted = np.array([[float(r.params.ks), float(r.params.kd)] for r in results])
        return np.max(np.abs(fitted / np.stack([true.ks, true.kd], -1) - 1.0), axis=-1)

    out = {"params": true}
    clean = synth_truth(track, true, substeps=cfg.substeps)
    out["clean"] = errors(fit_all(track, clean.positions, with_drop(fit_cfg, 0.0)))
    if spikes:
        noisy = synth_truth(
            track,
            true,
            substeps=cfg.substeps,
            spike_fraction=cfg.spike_fraction,
            spike_magnitude=cfg.spike_magnitude,
            seed=cfg.seed + 1,
        )
        out["spiked_plain"] = errors(fit_all(track, noisy.positions, with_drop(fit_cfg, 0.0)))
        out["spiked_robust"] = errors(fit_all(track, noisy.positions, with_drop(fit_cfg, cfg.drop_fraction)))
    return out
