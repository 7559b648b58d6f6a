"""Analytically integrated zero-restlength springs with learned per-particle
stiffness and damping."""

from .fitting import FitConfig, FitResult, fit_all, fit_particle, loss, loss_gradient, robust_refit
from .kinematics import CubicInterval, SampleTrack, build_interval, build_intervals
from .spring import ParticleState, Regime, SpringParams, classify, eval_state, step_sequence

__all__ = [
    "CubicInterval",
    "FitConfig",
    "FitResult",
    "ParticleState",
    "Regime",
    "SampleTrack",
    "SpringParams",
    "build_interval",
    "build_intervals",
    "classify",
    "eval_state",
    "fit_all",
    "fit_particle",
    "loss",
    "loss_gradient",
    "robust_refit",
    "step_sequence",
]
