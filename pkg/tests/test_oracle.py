import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zrspring.checks import smooth_track
from zrspring.kinematics import SampleTrack
from zrspring.oracle import be_simulate, be_step, synth_truth
from zrspring.spring import ParticleState, SpringParams, step_sequence


def vec(*v):
    return np.array(v, dtype=float)


def test_be_step_fixed_point():
    st_ = ParticleState(vec(1, 2, 3), np.zeros(3))
    out = be_step(st_, vec(1, 2, 3), np.zeros(3), SpringParams(7.0, 2.0), 0.1)
    np.testing.assert_array_equal(out.x, st_.x)
    np.testing.assert_array_equal(out.v, 0)


def test_be_step_hand_example():
    # v' = (0 + 1*(1*(0-1))) / (1 + 0 + 1) = -1/2, x' = 1 - 1/2
    out = be_step(ParticleState(vec(1, 0, 0), np.zeros(3)), np.zeros(3), np.zeros(3), SpringParams(1.0, 0.0), 1.0)
    np.testing.assert_allclose(out.x, [0.5, 0, 0])
    np.testing.assert_allclose(out.v, [-0.5, 0, 0])


def test_be_step_solves_implicit_equations():
    rng = np.random.default_rng(0)
    p = SpringParams(30.0, 4.0)
    x, v, tp, tv = rng.normal(size=(4, 3))
    h = 0.05
    out = be_step(ParticleState(x, v), tp, tv, p, h)
    np.testing.assert_allclose(out.x, x + h * out.v, rtol=1e-14)
    acc = 30.0 * (tp - out.x) + 4.0 * (tv - out.v)
    np.testing.assert_allclose(out.v, v + h * acc, rtol=1e-12, atol=1e-14)


def test_constant_track_stays_put():
    tr = SampleTrack(np.tile(vec(-1, 0.5, 2), (10, 1)), 0.1)
    res = be_simulate(tr, SpringParams(50.0, 3.0), substeps=7)
    np.testing.assert_allclose(res.x, tr.positions, atol=1e-15)
    np.testing.assert_allclose(res.v, 0, atol=1e-15)


def test_first_order_convergence():
    tr = smooth_track(np.random.default_rng(3), 12, 1 / 30)
    params = SpringParams(200.0, 6.0)
    exact = step_sequence(tr, params).x
    errs = [np.abs(be_simulate(tr, params, substeps=m).x - exact).max() for m in (50, 100, 200)]
    for coarse, fine in zip(errs, errs[1:]):
        assert fine / coarse == pytest.approx(0.5, abs=0.1)


def test_local_error_second_order():
    """Single step of a free oscillation: local error slope about 2 in log-log."""
    params = SpringParams(10.0, 1.0)
    init = ParticleState(vec(1, 0, -0.5), vec(0, 2, 0))
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    errs = []
    for h in hs:
        tr = SampleTrack(np.zeros((2, 3)), h)
        exact = step_sequence(tr, params, init=init).x[1]
        be = be_simulate(tr, params, init=init, substeps=1).x[1]
        errs.append(np.abs(be - exact).max())
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.15)


def test_energy_decreases_without_forcing():
    p = SpringParams(25.0, 0.5)
    state = ParticleState(vec(1, -2, 0.5), vec(3, 0, -1))
    zero = np.zeros(3)
    energy = lambda s: 0.5 * np.sum(s.v**2) + 0.5 * 25.0 * np.sum(s.x**2)
    last = energy(state)
    for _ in range(500):
        state = be_step(state, zero, zero, p, 0.02)
        e = energy(state)
        assert e <= last * (1 + 1e-14)
        last = e


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-2, 1e6), st.floats(0, 1e3), st.floats(1e-3, 10.0))
def test_unconditionally_stable(ks, kd, h):
    state = ParticleState(vec(1, 1, 1), vec(-5, 0, 5))
    zero = np.zeros(3)
    bound = np.sqrt(np.sum(state.v**2) + ks * np.sum(state.x**2))
    for _ in range(200):
        state = be_step(state, zero, zero, SpringParams(ks, kd), h)
    # the discrete energy norm never grows
    assert np.sqrt(np.sum(state.v**2) + ks * np.sum(state.x**2)) <= bound * (1 + 1e-9)


def test_long_run_stable_large_step():
    tr = SampleTrack(np.zeros((2, 3)), 1e4)
    res = be_simulate(tr, SpringParams(1e4, 0.0), init=ParticleState(vec(1, 0, 0), vec(0, 0, 0)), substeps=10_000)
    assert np.all(np.isfinite(res.x)) and np.abs(res.x[-1]).max() <= 1.0


def test_synth_spike_count_and_determinism():
    tr = smooth_track(np.random.default_rng(0), 100, 1 / 30, batch=(4,))
    p = SpringParams(np.full(4, 100.0), np.full(4, 5.0))
    a = synth_truth(tr, p, substeps=5, spike_fraction=0.1, spike_magnitude=0.3, seed=9)
    b = synth_truth(tr, p, substeps=5, spike_fraction=0.1, spike_magnitude=0.3, seed=9)
    clean = synth_truth(tr, p, substeps=5)
    assert len(a.spiked) == 10 and len(np.unique(a.spiked)) == 10
    np.testing.assert_array_equal(a.positions, b.positions)
    d = np.linalg.norm(a.positions - clean.positions, axis=-1)
    np.testing.assert_allclose(d[a.spiked], 0.3, rtol=1e-12)
    mask = np.ones(100, bool)
    mask[a.spiked] = False
    np.testing.assert_array_equal(d[mask], 0)
    assert len(clean.spiked) == 0


def test_synth_rejects_bad_fraction():
    tr = smooth_track(np.random.default_rng(0), 5, 0.1)
    with pytest.raises(ValueError):
        synth_truth(tr, SpringParams(1.0, 1.0), spike_fraction=1.0)
    with pytest.raises(ValueError):
        be_simulate(tr, SpringParams(1.0, 1.0), substeps=0)


def test_sine_track_agreement_at_ten_thousand_substeps():
    t = np.arange(31) / 30.0
    w = 2 * np.pi * 0.5
    pos = np.stack([np.sin(w * t), 0.5 * np.cos(0.7 * w * t + 1), 0.3 * np.sin(1.3 * w * t + 2)], -1)
    tr = SampleTrack(pos, 1 / 30)
    params = SpringParams(100.0, 2.0)
    err = be_simulate(tr, params, substeps=10_000).x - step_sequence(tr, params).x
    assert np.sqrt(np.mean(err**2)) <= 1e-5 * np.abs(pos).max()
