import numpy as np
import pytest

from zrspring.checks import smooth_track
from zrspring.fitting import (
    FitConfig,
    fit_all,
    fit_particle,
    genetic_init,
    loss,
    loss_gradient,
    per_frame_loss,
    robust_refit,
    with_drop,
)
from zrspring.kinematics import SampleTrack
from zrspring.spring import Regime, SpringParams, classify, step_sequence

DT = 1 / 30
FAST = FitConfig(gd_iterations=300)


def make_problem(seed=0, ks=200.0, kd=4.0, n_frames=60, batch=()):
    tr = smooth_track(np.random.default_rng(seed), n_frames, DT, batch=batch)
    return tr, step_sequence(tr, SpringParams(ks, kd)).x


def fd(f, k, rel=1e-4):
    h = rel * k
    return (8 * (f(k + h) - f(k - h)) - (f(k + 2 * h) - f(k - 2 * h))) / (12 * h)


# -- loss ----------------------------------------------------------------------


def test_loss_zero_on_self_consistent_truth():
    tr, truth = make_problem()
    assert loss(tr, truth, SpringParams(200.0, 4.0)) == 0.0


def test_loss_single_frame_residual():
    tr, truth = make_problem(n_frames=5)
    bumped = truth.copy()
    bumped[3] += [1.0, 2.0, 2.0]
    assert loss(tr, bumped, SpringParams(200.0, 4.0)) == pytest.approx(9.0, rel=1e-12)
    np.testing.assert_allclose(per_frame_loss(tr, bumped, SpringParams(200.0, 4.0)), [0, 0, 0, 9, 0], atol=1e-20)
    # index and boolean masks agree
    assert loss(tr, bumped, SpringParams(200.0, 4.0), mask=[0, 1, 2, 4]) == 0.0
    assert loss(tr, bumped, SpringParams(200.0, 4.0), mask=np.array([0, 0, 0, 1, 0], bool)) == pytest.approx(9.0)


def test_empty_mask():
    tr, truth = make_problem(n_frames=6)
    out = loss_gradient(tr, truth + 1.0, SpringParams(50.0, 2.0), mask=np.zeros(6, bool))
    assert out == (0.0, 0.0, 0.0)


def test_regularizer():
    tr, truth = make_problem(n_frames=6)
    L, dks, _ = loss_gradient(tr, truth, SpringParams(200.0, 4.0), regularization_weight=10.0)
    assert L == pytest.approx(10.0 / 200.0)
    assert dks == pytest.approx(-10.0 / 200.0**2)


@pytest.mark.parametrize("ks, kd", [(100.0, 40.0), (100.0, 3.0), (2000.0, 0.5)])
def test_loss_gradient_matches_differences(ks, kd):
    tr, truth = make_problem(seed=1, ks=300.0, kd=10.0, n_frames=40)
    _, dks, dkd = loss_gradient(tr, truth, SpringParams(ks, kd))
    assert dks == pytest.approx(fd(lambda k: loss(tr, truth, SpringParams(k, kd)), ks), rel=1e-6)
    assert dkd == pytest.approx(fd(lambda k: loss(tr, truth, SpringParams(ks, k)), kd), rel=1e-6)


def test_multi_sequence_loss_is_sum():
    a, ga = make_problem(seed=2, n_frames=20)
    b, gb = make_problem(seed=3, n_frames=35)
    p = SpringParams(150.0, 6.0)
    ga, gb = ga + 0.01, gb - 0.02
    both = loss_gradient([a, b], [ga, gb], p)
    sep = np.add(loss_gradient(a, ga, p), loss_gradient(b, gb, p))
    np.testing.assert_allclose(both, sep, rtol=1e-13)


def test_batched_loss_matches_single():
    tr, truth = make_problem(seed=4, batch=(3,), n_frames=20)
    truth = truth + 0.05
    p = SpringParams(np.array([10.0, 100.0, 900.0]), np.array([1.0, 30.0, 5.0]))
    L = loss(tr, truth, p)
    for i in range(3):
        assert L[i] == pytest.approx(loss(tr.particle(i), truth[:, i], p[i]), rel=1e-13)


def test_shape_mismatch_rejected():
    tr, truth = make_problem(n_frames=10)
    with pytest.raises(ValueError):
        loss(tr, truth[:-1], SpringParams(1.0, 1.0))


# -- genetic initialisation ------------------------------------------------------


def test_ga_keeps_injected_optimum():
    tr, truth = make_problem()
    seed = np.array([[np.log(200.0), np.log(4.0 + 1e-6)]])
    p = genetic_init(tr, truth, FitConfig(), seed_population=seed)
    assert loss(tr, truth, p) <= 1e-20
    assert float(p.ks) == pytest.approx(200.0, rel=1e-12)


def test_ga_deterministic_and_better_than_median():
    tr, truth = make_problem(seed=5, ks=500.0, kd=2.0)
    cfg = FitConfig(seed=3)
    a = genetic_init(tr, truth, cfg)
    b = genetic_init(tr, truth, cfg)
    assert (float(a.ks), float(a.kd)) == (float(b.ks), float(b.kd))
    ks_min, ks_max, kd_min, kd_max = cfg.bounds
    median = SpringParams(np.sqrt(ks_min * ks_max), np.sqrt(kd_min * kd_max))
    assert loss(tr, truth, a) < loss(tr, truth, median)


# -- single-particle fitting -------------------------------------------------------


def test_recovers_known_parameters():
    tr, truth = make_problem(ks=200.0, kd=4.0, n_frames=60)
    r = fit_particle(tr, truth, FAST)
    assert float(r.params.ks) == pytest.approx(200.0, rel=0.02)
    assert float(r.params.kd) == pytest.approx(4.0, rel=0.02)
    assert r.final_loss == pytest.approx(loss(tr, truth, r.params), rel=1e-12, abs=1e-30)
    assert r.regime.kind is classify(r.params).kind


def test_linear_track_truth_equal_target():
    """Uniform motion is followed exactly by any spring: loss 0, converged."""
    t = np.arange(30)[:, None] * DT
    tr = SampleTrack(np.hstack([t, -2 * t, 0.5 + 0 * t]), DT)
    r = fit_particle(tr, tr.positions, FAST)
    assert r.converged
    assert r.final_loss <= 1e-10


def test_constant_track():
    tr = SampleTrack(np.tile([1.0, 2.0, 3.0], (12, 1)), DT)
    r = fit_particle(tr, tr.positions, FAST)
    assert r.final_loss == 0.0 and r.converged
    assert np.isfinite(float(r.params.ks)) and np.isfinite(float(r.params.kd))


def test_descent_result_is_local_minimum():
    tr, truth = make_problem(seed=6, ks=80.0, kd=12.0)
    truth = truth + 0.02 * np.random.default_rng(0).normal(size=truth.shape)
    r = fit_particle(tr, truth, FAST)
    ks, kd = float(r.params.ks), float(r.params.kd)
    for f_ks, f_kd in [(1.05, 1), (0.95, 1), (1, 1.05), (1, 0.95)]:
        assert loss(tr, truth, SpringParams(ks * f_ks, kd * f_kd)) >= r.final_loss


def test_linear_space_option():
    tr, truth = make_problem(ks=200.0, kd=4.0, n_frames=40)
    r = fit_particle(tr, truth, FitConfig(log_space=False, gd_iterations=300))
    # GA still seeds from log space, descent runs on raw values
    assert r.final_loss <= loss(tr, truth, genetic_init(tr, truth, FitConfig()))


# -- robust refit --------------------------------------------------------------------


def test_zero_drop_is_fit_particle():
    tr, truth = make_problem(seed=7)
    truth = truth + 0.01
    a, b = fit_particle(tr, truth, FAST), robust_refit(tr, truth, FAST)
    assert (float(a.params.ks), float(a.params.kd), a.final_loss) == (
        float(b.params.ks), float(b.params.kd), b.final_loss
    )
    assert b.dropped_frames.size == 0


def test_refit_on_clean_data_stays_close():
    tr, truth = make_problem(seed=8, n_frames=60)
    first = fit_particle(tr, truth, FAST)
    r = robust_refit(tr, truth, with_drop(FAST, 0.1))
    assert len(r.dropped_frames) == 6
    assert float(r.params.ks) == pytest.approx(float(first.params.ks), rel=0.01)
    assert float(r.params.kd) == pytest.approx(float(first.params.kd), rel=0.01)


def test_refit_ignores_spikes():
    tr, truth = make_problem(seed=9, ks=300.0, kd=8.0, n_frames=60)
    spiked = truth.copy()
    frames = [5, 17, 30, 44, 52, 58]
    spiked[frames] += 0.5
    plain = fit_particle(tr, spiked, FAST)
    r = robust_refit(tr, spiked, with_drop(FAST, 0.1))
    assert sorted(r.dropped_frames.tolist()) == frames
    err = lambda p: abs(float(p.ks) / 300.0 - 1) + abs(float(p.kd) / 8.0 - 1)
    assert err(r.params) < 0.01 < err(plain.params)


def test_drop_ties_broken_by_frame_index():
    tr = SampleTrack(np.zeros((10, 3)), DT)
    truth = np.zeros((10, 3))
    truth[[2, 5, 7]] = 1.0
    r = robust_refit(tr, truth, with_drop(FAST, 0.2))
    assert r.dropped_frames.tolist() == [2, 5]


# -- fit_all ------------------------------------------------------------------------


def test_fit_all_identical_particles_bit_identical():
    tr, truth = make_problem(seed=10, n_frames=30)
    pos = np.repeat(tr.positions[:, None], 3, axis=1)
    gt = np.repeat(truth[:, None], 3, axis=1) + 0.01
    res = fit_all(SampleTrack(pos, DT), gt, FitConfig(gd_iterations=100))
    ks = [float(r.params.ks) for r in res]
    assert ks[0] == ks[1] == ks[2]
    single = fit_particle(tr, truth + 0.01, FitConfig(gd_iterations=100))
    assert float(single.params.ks) == ks[0]


def test_fit_all_permutation_invariant():
    tr, truth = make_problem(seed=11, batch=(4,), n_frames=30)
    truth = truth + 0.01 * np.random.default_rng(1).normal(size=truth.shape)
    cfg = FitConfig(gd_iterations=100)
    a = fit_all(tr, truth, cfg)
    perm = [2, 0, 3, 1]
    b = fit_all(SampleTrack(tr.positions[:, perm], DT), truth[:, perm], cfg)
    for j, i in enumerate(perm):
        assert float(b[j].params.ks) == float(a[i].params.ks)
        assert b[j].final_loss == a[i].final_loss


def test_fit_all_chunking_does_not_change_results():
    tr, truth = make_problem(seed=12, batch=(5,), n_frames=20)
    cfg = FitConfig(gd_iterations=50)
    a = fit_all(tr, truth + 0.01, cfg, chunk=256)
    b = fit_all(tr, truth + 0.01, cfg, chunk=2)
    assert [r.final_loss for r in a] == [r.final_loss for r in b]


def test_fit_all_empty_and_bad_input():
    assert fit_all(SampleTrack(np.zeros((5, 0, 3)), DT), np.zeros((5, 0, 3))) == []
    with pytest.raises(ValueError):
        fit_all(SampleTrack(np.zeros((5, 3)), DT), np.zeros((5, 3)))


# -- config ---------------------------------------------------------------------------


def test_config_from_mapping():
    cfg = FitConfig.from_mapping(
        {"seed": "4", "log_space": "false", "gd_step": "0.5", "bounds": "2, 100, 0.1, 50"}
    )
    assert cfg.seed == 4 and cfg.log_space is False and cfg.gd_step == 0.5
    assert cfg.bounds == (2.0, 100.0, 0.1, 50.0)
    with pytest.raises(ValueError):
        FitConfig.from_mapping({"nope": "1"})
    with pytest.raises(ValueError):
        FitConfig(drop_fraction=1.0)
    with pytest.raises(ValueError):
        FitConfig(bounds=(10.0, 1.0, 0.0, 1.0))
