"""Per-particle stiffness/damping fitting against ground-truth trajectories.

The objective for one particle is the summed squared distance between the
simulated and ground-truth positions at the sample times (optionally over a
frame mask, optionally summed over several sequences), plus an optional
``weight / ks`` penalty against very soft springs.

Optimisation is a short genetic search followed by gradient descent with
backtracking.  Particles never interact, so a batch is fitted in lockstep
with every decision (selection, step acceptance, convergence) taken per
particle; a particle's result does not depend on what else is in the batch.
"""

from dataclasses import dataclass, field, fields, replace
import logging

import numpy as np

from .gradient import propagate_sequence
from .kinematics import SampleTrack
from .spring import SpringParams, classify, step_sequence

logger = logging.getLogger(__name__)

KD_OFFSET = 1e-6  # kappa in log(kd + kappa)
_THETA_LIMIT = np.log(1e12)


@dataclass(frozen=True)
class FitConfig:
    ga_population: int = 32
    ga_iterations: int = 5
    gd_iterations: int = 500
    gd_step: float = 0.1
    log_space: bool = True
    bounds: tuple = (1.0, 1e4, 1e-2, 1e3)  # ks_min, ks_max, kd_min, kd_max
    drop_fraction: float = 0.0
    regularization_weight: float = 0.0
    tournament_size: int = 3
    mutation_sigma: float = 0.5
    max_halvings: int = 30
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        ks_min, ks_max, kd_min, kd_max = self.bounds
        if not (0 < ks_min < ks_max and 0 <= kd_min < kd_max):
            raise ValueError(f"invalid bounds {self.bounds}")
        if not 0.0 <= self.drop_fraction < 1.0:
            raise ValueError("drop_fraction must lie in [0, 1)")
        if self.regularization_weight < 0:
            raise ValueError("regularization_weight must be nonnegative")
        if self.ga_population < 2 or self.tournament_size < 1:
            raise ValueError("GA needs a population of at least 2")

    @classmethod
    def from_mapping(cls, values):
        """Build from string-valued ``key=value`` pairs (config files, CLI)."""
        kinds = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            kind = kinds[key]
            if kind is bool:
                parsed[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif kind is int:
                parsed[key] = int(raw)
            elif kind is float:
                parsed[key] = float(raw)
            else:
                parts = str(raw).replace(",", " ").split()
                parsed[key] = tuple(float(p) for p in parts)
                if len(parsed[key]) != 4:
                    raise ValueError("bounds needs four numbers")
        return cls(**parsed)


@dataclass
class FitResult:
    params: SpringParams
    final_loss: float
    per_frame_loss: np.ndarray
    regime: object
    dropped_frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    converged: bool = False
    iterations: int = 0
    error: str = None


# -- problem assembly -------------------------------------------------------


def _positions(x):
    return np.asarray(getattr(x, "positions", x), dtype=float)


def _as_sequences(track, truth):
    """Normalise single or multi-sequence input to a list of (track, truth)."""
    if isinstance(track, SampleTrack):
        track, truth = [track], [truth]
    seqs = []
    for tr, gt in zip(track, truth, strict=True):
        pos = _positions(gt)
        if pos.shape != tr.positions.shape:
            raise ValueError(
                f"truth shape {pos.shape} does not match target shape {tr.positions.shape}"
            )
        gt_dt = getattr(gt, "dt", tr.dt)
        if not np.isclose(gt_dt, tr.dt, rtol=1e-12, atol=0):
            raise ValueError("truth and target sample spacing differ")
        seqs.append((tr, pos))
    return seqs


def _dot3(a, b):
    # explicit component sum; einsum's order depends on the batch layout
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _sum_frames(a):
    """Sequential sum over the leading axis.

    ``np.sum`` switches between pairwise and running sums depending on the
    memory layout, so a particle's loss would change with the batch size.
    """
    total = np.zeros(a.shape[1:])
    for row in a:
        total = total + row
    return total


class _Batch:
    """Sequences for a batch of ``B`` particles with per-particle frame masks."""

    def __init__(self, seqs, masks, weight):
        self.seqs = seqs  # [(track (N,B,3), truth (N,B,3))]
        self.masks = masks  # [(N,B) float]
        self.weight = weight

    @classmethod
    def build(cls, track, truth, mask, weight):
        seqs = []
        masks = []
        for k, (tr, gt) in enumerate(_as_sequences(track, truth)):
            if tr.positions.ndim == 2:
                tr = SampleTrack(tr.positions[:, None], tr.dt)
                gt = gt[:, None]
            seqs.append((tr, gt))
            m = _mask_for(mask, k, tr.n_frames)
            masks.append(np.broadcast_to(m.reshape(m.shape + (1,) * (2 - m.ndim)), gt.shape[:2]).astype(float))
        return cls(seqs, masks, weight)

    @property
    def size(self):
        return self.seqs[0][1].shape[1]

    def take(self, idx):
        seqs = [(SampleTrack(tr.positions[:, idx], tr.dt), gt[:, idx]) for tr, gt in self.seqs]
        return _Batch(seqs, [m[:, idx] for m in self.masks], self.weight)

    def repeat(self, k):
        # particle-major tiling: entry i*k + j is particle i, copy j
        seqs = [
            (SampleTrack(np.repeat(tr.positions, k, axis=1), tr.dt), np.repeat(gt, k, axis=1))
            for tr, gt in self.seqs
        ]
        return _Batch(seqs, [np.repeat(m, k, axis=1) for m in self.masks], self.weight)

    def with_masks(self, masks):
        return _Batch(self.seqs, masks, self.weight)

    def frame_losses(self, ks, kd):
        params = SpringParams(ks, kd)
        out = []
        for tr, gt in self.seqs:
            r = step_sequence(tr, params).x - gt
            out.append(_dot3(r, r))
        return out

    def loss(self, ks, kd):
        total = self.weight / ks if self.weight else np.zeros_like(ks)
        for fl, m in zip(self.frame_losses(ks, kd), self.masks):
            total = total + _sum_frames(fl * m)
        return total

    def loss_grad(self, ks, kd):
        params = SpringParams(ks, kd)
        total = self.weight / ks if self.weight else np.zeros_like(ks)
        dks = -self.weight / ks**2 if self.weight else np.zeros_like(ks)
        dkd = np.zeros_like(kd)
        for (tr, gt), m in zip(self.seqs, self.masks):
            traj, sens = propagate_sequence(tr, params)
            r = (traj.x - gt) * m[..., None]
            total = total + _sum_frames(_dot3(r, traj.x - gt))
            dks = dks + 2.0 * _sum_frames(_dot3(r, sens.dx_dks))
            dkd = dkd + 2.0 * _sum_frames(_dot3(r, sens.dx_dkd))
        return total, dks, dkd


def _mask_for(mask, k, n_frames):
    if mask is None:
        return np.ones(n_frames, dtype=bool)
    m = mask[k] if isinstance(mask, (list, tuple)) else mask
    m = np.asarray(m)
    if m.dtype != bool:
        # an index set
        sel = np.zeros(n_frames, dtype=bool)
        sel[m.astype(int)] = True
        m = sel
    if m.shape[0] != n_frames:
        raise ValueError("mask length does not match frame count")
    return m


# -- public loss ------------------------------------------------------------


def _unbatch(x, single):
    return float(x[0]) if single else x


def _is_single(track):
    tr = track if isinstance(track, SampleTrack) else track[0]
    return tr.positions.ndim == 2


def loss(track, truth, params, mask=None, regularization_weight=0.0):
    """Summed squared position error over the masked frames.

    ``track``/``truth`` may be one sequence or lists of sequences (summed).
    ``mask`` is a boolean frame mask or an index set, per sequence if a list.
    Batched ``(N, V, 3)`` input gives one loss per particle.
    """
    batch = _Batch.build(track, truth, mask, regularization_weight)
    ks, kd = np.broadcast_arrays(*(np.atleast_1d(p) for p in (params.ks, params.kd)))
    return _unbatch(batch.loss(ks, kd), _is_single(track))


def loss_gradient(track, truth, params, mask=None, regularization_weight=0.0):
    """``(loss, dloss/dks, dloss/dkd)`` via forward-mode sensitivities."""
    batch = _Batch.build(track, truth, mask, regularization_weight)
    ks, kd = np.broadcast_arrays(*(np.atleast_1d(p) for p in (params.ks, params.kd)))
    out = batch.loss_grad(ks.astype(float), kd.astype(float))
    single = _is_single(track)
    return tuple(_unbatch(o, single) for o in out)


def per_frame_loss(track, truth, params):
    """Squared error at each frame, concatenated over sequences."""
    batch = _Batch.build(track, truth, None, 0.0)
    ks, kd = np.broadcast_arrays(*(np.atleast_1d(p) for p in (params.ks, params.kd)))
    fl = np.concatenate(batch.frame_losses(ks, kd), axis=0)
    return fl[:, 0] if _is_single(track) else fl


# -- parameterisation -------------------------------------------------------


def _to_theta(ks, kd, log_space):
    if log_space:
        return np.stack([np.log(ks), np.log(kd + KD_OFFSET)], axis=-1)
    return np.stack([ks, kd], axis=-1)


def _from_theta(theta, log_space):
    if log_space:
        t = np.clip(theta, -_THETA_LIMIT, _THETA_LIMIT)
        return np.exp(t[..., 0]), np.maximum(np.exp(t[..., 1]) - KD_OFFSET, 0.0)
    return np.maximum(theta[..., 0], 1e-12), np.maximum(theta[..., 1], 0.0)


def _theta_grad(theta, dks, dkd, log_space):
    if log_space:
        t = np.clip(theta, -_THETA_LIMIT, _THETA_LIMIT)
        return np.stack([dks * np.exp(t[..., 0]), dkd * np.exp(t[..., 1])], axis=-1)
    return np.stack([dks, dkd], axis=-1)


# -- genetic initialisation ---------------------------------------------------


def _log_bounds(cfg):
    ks_min, ks_max, kd_min, kd_max = cfg.bounds
    lo = np.array([np.log(ks_min), np.log(kd_min + KD_OFFSET)])
    hi = np.array([np.log(ks_max), np.log(kd_max + KD_OFFSET)])
    return lo, hi


def _genetic_batch(batch, cfg, seed_population=None):
    """Genetic search in log space; returns best (ks, kd, loss) per particle.

    Random draws are shared by all particles (only fitness differs), which is
    what keeps identical particles bit-identical and the batch order-free.
    """
    rng = np.random.default_rng(cfg.seed)
    B, P = batch.size, cfg.ga_population
    lo, hi = _log_bounds(cfg)
    genes = np.broadcast_to(lo + (hi - lo) * rng.random((P, 2)), (B, P, 2)).copy()
    if seed_population is not None:
        seeded = np.asarray(seed_population, dtype=float).reshape(B, -1, 2)
        n = min(seeded.shape[1], P)
        genes[:, :n] = seeded[:, :n]
    tiled = {P: batch.repeat(P), P - 1: batch.repeat(P - 1)}

    def evaluate(g):
        ks = np.exp(g[..., 0]).reshape(-1)
        kd = np.maximum(np.exp(g[..., 1]) - KD_OFFSET, 0.0).reshape(-1)
        f = tiled[g.shape[1]].loss(ks, kd).reshape(B, g.shape[1])
        return np.where(np.isfinite(f), f, np.inf)

    fit = evaluate(genes)
    rows = np.arange(B)[:, None]
    for _ in range(cfg.ga_iterations):
        n_child = P - 1
        # tournament: lowest loss among tournament_size random entrants
        entrants = rng.integers(0, P, size=(2, n_child, cfg.tournament_size))
        parents = []
        for e in entrants:
            winner = np.argmin(fit[:, e], axis=-1)  # (B, n_child)
            parents.append(np.take_along_axis(np.broadcast_to(e, (B,) + e.shape), winner[..., None], -1)[..., 0])
        pa = genes[rows, parents[0]]
        pb = genes[rows, parents[1]]
        # BLX-0.5 blend crossover followed by log-normal mutation
        beta = rng.uniform(-0.5, 1.5, size=(n_child, 2))
        child = pa + beta * (pb - pa)
        child = child + cfg.mutation_sigma * rng.normal(size=(n_child, 2))
        child = np.clip(child, lo, hi)
        best = np.argmin(fit, axis=1)
        elite = genes[np.arange(B), best][:, None]
        elite_fit = fit[np.arange(B), best][:, None]
        genes = np.concatenate([elite, child], axis=1)
        fit = np.concatenate([elite_fit, evaluate(child)], axis=1)
    best = np.argmin(fit, axis=1)
    g = genes[np.arange(B), best]
    return np.exp(g[:, 0]), np.maximum(np.exp(g[:, 1]) - KD_OFFSET, 0.0), fit[np.arange(B), best]


def genetic_init(track, truth, cfg, mask=None, seed_population=None):
    """Best parameters found by a few generations of a genetic algorithm.

    ``seed_population`` optionally injects known ``(log ks, log(kd+1e-6))``
    members into the initial population.
    """
    batch = _Batch.build(track, truth, mask, cfg.regularization_weight)
    ks, kd, _ = _genetic_batch(batch, cfg, seed_population)
    if _is_single(track):
        return SpringParams(float(ks[0]), float(kd[0]))
    return SpringParams(ks, kd)


# -- gradient descent ---------------------------------------------------------


def _descend(batch, ks0, kd0, cfg):
    """Gradient descent with per-particle step sizes and backtracking.

    The trial step length is Barzilai-Borwein; a step that raises the loss is
    halved until it does not (at most ``max_halvings`` times).
    """
    log_space = cfg.log_space
    B = batch.size
    theta = _to_theta(ks0, kd0, log_space)
    ks, kd = _from_theta(theta, log_space)
    L, dks, dkd = batch.loss_grad(ks, kd)
    grad = _theta_grad(theta, dks, dkd, log_space)
    history = [L.copy()]
    gnorm = np.sqrt(grad[:, 0] ** 2 + grad[:, 1] ** 2)
    alpha = cfg.gd_step / np.maximum(gnorm, 1e-300)
    prev_theta = prev_grad = None
    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    floor = 1e-30

    for it in range(cfg.gd_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        if prev_theta is not None:
            s = theta[idx] - prev_theta[idx]
            y = grad[idx] - prev_grad[idx]
            sy = s[:, 0] * y[:, 0] + s[:, 1] * y[:, 1]
            ss = s[:, 0] * s[:, 0] + s[:, 1] * s[:, 1]
            bb = np.where(sy > 0, ss / np.where(sy > 0, sy, 1.0), alpha[idx] * 2.0)
            alpha[idx] = np.clip(bb, 1e-12, 1e6)
        prev_theta, prev_grad = theta.copy(), grad.copy()

        sub = batch.take(idx)
        step = alpha[idx].copy()
        base = L[idx]
        new_theta = theta[idx].copy()
        new_L = base.copy()
        pending = np.arange(idx.size)
        for _ in range(cfg.max_halvings + 1):
            trial = theta[idx[pending]] - step[pending, None] * grad[idx[pending]]
            tks, tkd = _from_theta(trial, log_space)
            tl = sub.take(pending).loss(tks, tkd)
            ok = np.isfinite(tl) & (tl <= base[pending])
            new_theta[pending[ok]] = trial[ok]
            new_L[pending[ok]] = tl[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            step[pending] *= 0.5
        alpha[idx] = step
        # particles that found no descent step stay put
        theta[idx] = new_theta
        ks_i, kd_i = _from_theta(new_theta, log_space)
        Li, dks_i, dkd_i = sub.loss_grad(ks_i, kd_i)
        L[idx] = Li
        grad[idx] = _theta_grad(new_theta, dks_i, dkd_i, log_space)
        iters[idx] += 1
        history.append(L.copy())

        if len(history) > 10:
            old = history[-11][idx]
            rel = np.abs(old - Li) / np.maximum(np.abs(old), floor)
            done = (rel < cfg.tol) | (Li <= floor)
        else:
            done = Li <= floor
        converged[idx[done]] = True
        active[idx[done]] = False

    ks, kd = _from_theta(theta, log_space)
    return ks, kd, L, converged, iters


def _results(batch, ks, kd, L, converged, iters, dropped=None):
    per_frame = np.concatenate(batch.frame_losses(ks, kd), axis=0)
    out = []
    for i in range(batch.size):
        p = SpringParams(float(ks[i]), float(kd[i]))
        out.append(
            FitResult(
                params=p,
                final_loss=float(L[i]),
                per_frame_loss=per_frame[:, i].copy(),
                regime=classify(p),
                dropped_frames=np.zeros(0, dtype=int) if dropped is None else dropped[i],
                converged=bool(converged[i]),
                iterations=int(iters[i]),
            )
        )
    return out


def _fit_batch(batch, cfg):
    ks, kd, _ = _genetic_batch(batch, cfg)
    ks, kd, L, conv, iters = _descend(batch, ks, kd, cfg)
    return ks, kd, L, conv, iters


def _drop_masks(batch, ks, kd, drop_fraction):
    """Masks with the highest-loss fraction of each sequence removed."""
    masks, dropped = [], [[] for _ in range(batch.size)]
    offset = 0
    for fl, m in zip(batch.frame_losses(ks, kd), batch.masks):
        N = fl.shape[0]
        n_drop = int(np.floor(drop_fraction * N))
        new = m.copy()
        for i in range(batch.size):
            # stable sort on (loss desc, frame asc)
            order = np.lexsort((np.arange(N), -fl[:, i]))
            drop = np.sort(order[:n_drop])
            new[drop, i] = 0.0
            dropped[i].extend((drop + offset).tolist())
        masks.append(new)
        offset += N
    return masks, [np.asarray(d, dtype=int) for d in dropped]


def _robust_batch(batch, cfg):
    ks, kd, L, conv, iters = _fit_batch(batch, cfg)
    if cfg.drop_fraction <= 0:
        return _results(batch, ks, kd, L, conv, iters)
    masks, dropped = _drop_masks(batch, ks, kd, cfg.drop_fraction)
    kept = batch.with_masks(masks)
    # the first fit joins the refit's initial population as a warm start
    seed = _to_theta(ks, kd, True)[:, None, :]
    ks2, kd2, _ = _genetic_batch(kept, cfg, seed_population=seed)
    ks2, kd2, L2, conv2, iters2 = _descend(kept, ks2, kd2, cfg)
    return _results(kept, ks2, kd2, L2, conv2, iters + iters2, dropped)


def fit_particle(track, truth, cfg=FitConfig()):
    """Genetic initialisation followed by gradient descent for one particle."""
    batch = _Batch.build(track, truth, None, cfg.regularization_weight)
    return _results(batch, *_fit_batch(batch, cfg))[0]


def robust_refit(track, truth, cfg=FitConfig()):
    """Fit, drop the ``drop_fraction`` worst frames, and fit again.

    With ``drop_fraction == 0`` this is exactly :func:`fit_particle`.
    """
    batch = _Batch.build(track, truth, None, cfg.regularization_weight)
    return _robust_batch(batch, cfg)[0]


def fit_all(tracks, truths, cfg=FitConfig(), chunk=256):
    """Fit every particle of ``(N, V, 3)`` targets/truths independently.

    Runs :func:`robust_refit` semantics when ``cfg.drop_fraction > 0``.  The
    particles are processed in vectorised chunks; a chunk that fails is
    retried one particle at a time so an error stays with its particle.
    """
    seqs = _as_sequences(tracks, truths)
    V = seqs[0][0].positions.shape[1] if seqs[0][0].positions.ndim == 3 else None
    if V is None:
        raise ValueError("fit_all expects (N, V, 3) trajectories")
    if V == 0:
        return []
    batch = _Batch.build(tracks, truths, None, cfg.regularization_weight)
    results = []
    for start in range(0, V, chunk):
        idx = np.arange(start, min(start + chunk, V))
        try:
            results.extend(_robust_batch(batch.take(idx), cfg))
        except Exception:
            for i in idx:
                try:
                    results.extend(_robust_batch(batch.take([i]), cfg))
                except Exception as exc:
                    logger.warning("fit failed for particle %d: %s", i, exc)
                    results.append(
                        FitResult(
                            params=None,
                            final_loss=float("nan"),
                            per_frame_loss=np.zeros(0),
                            regime=None,
                            error=str(exc),
                        )
                    )
    return results


def with_drop(cfg, drop_fraction):
    return replace(cfg, drop_fraction=drop_fraction)
