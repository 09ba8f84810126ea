import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopisac import estimate, fisher
from coopisac.errors import EmptyLink, RankDeficientFusion
from coopisac.grid import AllocationPlan, make_baseline
from coopisac.scenario import TargetState, desk_scenario, draw_target
from coopisac.signal import ObservationSet, PilotSet, noiseless_echo, synthesize


def clean_obs(sc, plan, pil):
    return ObservationSet(noiseless_echo(sc, plan, pil), sc.sensing_noise.noise_power_w)


@pytest.fixture(scope="module")
def setup():
    sc = desk_scenario(snr_db=30.0)
    plan = make_baseline("tdb", sc, 1.0)
    pil = PilotSet.qpsk(sc.num_tx, sc.num_users, sc.ofdm.shape, 0)
    return sc, plan, pil


def test_noiseless_slf_recovers_truth(setup):
    sc, plan, pil = setup
    est = estimate.slf_estimate(clean_obs(sc, plan, pil), plan, pil, sc)
    assert np.allclose(est.s_hat, sc.target.state, atol=1e-4)
    assert np.allclose(est.alpha_hats.ravel(), sc.reflections.ravel(), rtol=1e-4)


def test_noiseless_plf_ml_recovers_truth(setup):
    sc, plan, pil = setup
    reports, fused = estimate.plf_pipeline(clean_obs(sc, plan, pil), plan, pil, sc, mode="ml", weight_mode="wls")
    truth = estimate.measurement_model(sc, sc.target.state)
    got = np.concatenate([r.zeta for r in reports])
    assert np.allclose(got, truth, rtol=1e-6, atol=1e-9)
    assert np.allclose(fused.s_hat, sc.target.state, atol=1e-4)


def test_fft_report_within_one_bin(setup):
    sc, plan, pil = setup
    N, M = sc.ofdm.shape
    obs = clean_obs(sc, plan, pil)
    truth = estimate.measurement_model(sc, sc.target.state).reshape(-1, 2)
    for factor in (1, 4):
        size = (factor * N, factor * M)
        for p in range(sc.num_tx):
            for q in range(sc.num_rx):
                rep = estimate.plf_local_fft(obs, plan, pil, sc, p, q, size)
                r = p * sc.num_rx + q
                assert abs(rep.tau_s - truth[r, 0]) <= 0.5 / (size[0] * sc.ofdm.subcarrier_spacing_hz) + 1e-15
                assert abs(rep.fd_hz - truth[r, 1]) <= 0.5 / (size[1] * sc.ofdm.symbol_duration_s) + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_fusion_inverts_measurement_model(seed):
    sc = desk_scenario(16, 8)
    u, v = draw_target(seed)
    s = np.concatenate([u, v])
    zeta = estimate.measurement_model(sc, s)
    W = estimate.fusion_weight("ls", sc)
    res = estimate.fuse_vector(zeta, sc, W, s + np.array([2.0, -2.0, 1.0, -1.0]))
    assert np.allclose(res.s_hat, s, atol=1e-6)


def test_measurement_jacobian_matches_differences(desk):
    s = desk.target.state
    J = estimate.measurement_jacobian(desk, s)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1e-4
        num = (estimate.measurement_model(desk, s + e) - estimate.measurement_model(desk, s - e)) / 2e-4
        assert np.allclose(J[:, i], num, rtol=1e-6, atol=1e-12)


def test_noisy_estimates_are_close(setup):
    sc, plan, pil = setup
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        obs = synthesize(sc, plan, pil, seed=3)
    crb = fisher.slf_crb(sc, plan)
    err = estimate.slf_estimate(obs, plan, pil, sc).s_hat - sc.target.state
    assert np.linalg.norm(err[:2]) < 6 * np.sqrt(crb.position_bound)
    _, fused = estimate.plf_pipeline(obs, plan, pil, sc, mode="fft", weight_mode="ls")
    assert np.linalg.norm(fused.s_hat[:2] - sc.target.state[:2]) < 5.0


def test_wrap_doppler():
    ts = 1e-5
    assert estimate.wrap_doppler(0.5 / ts + 10, ts) == pytest.approx(-0.5 / ts + 10)
    assert estimate.wrap_doppler(100.0, ts) == pytest.approx(100.0)


def test_plausible_state(desk):
    assert estimate.plausible_state(desk, desk.target.state)
    assert not estimate.plausible_state(desk, np.array([1e6, 0, 0, 0]))
    assert not estimate.plausible_state(desk, np.array([np.nan, 0, 0, 0]))


def test_errors(setup):
    sc, plan, pil = setup
    s = plan.sensing.copy()
    s[0] = 0
    silent = AllocationPlan(s, plan.comm, plan.power)
    with pytest.raises(EmptyLink):
        estimate.plf_local_fft(clean_obs(sc, plan, pil), silent, pil, sc, 0, 0)
    rep = estimate.plf_local_fft(clean_obs(sc, plan, pil), plan, pil, sc, 0, 0)
    with pytest.raises(RankDeficientFusion):
        estimate.fuse([rep], sc, "ls")
    zeta = estimate.measurement_model(sc, sc.target.state)
    zeta[2:] = np.nan
    with pytest.raises(RankDeficientFusion):
        estimate.fuse_vector(zeta, sc, np.eye(8), sc.target.state)
    with pytest.raises(ValueError):
        estimate.fusion_weight("wls", sc)
