import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopisac.grid import make_baseline, vec
from coopisac.scenario import TargetState, link_geometry
from coopisac.signal import (
    PilotSet,
    check_doppler_validity,
    delay_steering,
    doppler_steering,
    link_response,
    noiseless_echo,
    per_re_rate,
    sum_rate_bpshz,
    synthesize,
)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-7, 2e-6), st.floats(-5e3, 5e3))
def test_link_response_vec(tau, fd):
    from coopisac.scenario import desk_scenario

    ofdm = desk_scenario(8, 4).ofdm
    R = link_response(ofdm, tau, fd)
    n = np.arange(8)[:, None]
    m = np.arange(4)[None, :]
    direct = np.exp(-2j * np.pi * ofdm.subcarrier_spacing_hz * tau * n) * np.exp(2j * np.pi * ofdm.symbol_duration_s * fd * m)
    assert np.allclose(R, direct)
    assert np.allclose(vec(R), np.kron(np.conj(doppler_steering(ofdm, fd)), delay_steering(ofdm, tau)))


def test_pilots_unit_modulus():
    pil = PilotSet.qpsk(2, 2, (8, 4), seed=1)
    assert np.allclose(np.abs(pil.pilots), 1) and np.allclose(np.abs(pil.symbols), 1)


def test_noiseless_echo_superposition(small):
    plan = make_baseline("fdi", small, 1.0)
    pil = PilotSet.qpsk(small.num_tx, small.num_users, small.ofdm.shape, 0)
    y = noiseless_echo(small, plan, pil)
    geo = link_geometry(small)
    x = np.sqrt(plan.power) * plan.sensing * pil.pilots
    for q in range(small.num_rx):
        ref = sum(
            small.reflections[p, q] * link_response(small.ofdm, geo.tau_s[p, q], geo.fd_hz[p, q]) * x[p]
            for p in range(small.num_tx)
        )
        assert np.allclose(y[q], ref)


def test_synthesize_deterministic_and_noise_power(desk):
    plan = make_baseline("tdb", desk, 1.0)
    pil = PilotSet.qpsk(desk.num_tx, desk.num_users, desk.ofdm.shape, 0)
    a = synthesize(desk, plan, pil, seed=11)
    b = synthesize(desk, plan, pil, seed=11)
    assert np.array_equal(a.grids, b.grids)
    noise = a.grids - noiseless_echo(desk, plan, pil)
    sigma2 = desk.sensing_noise.noise_power_w
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(sigma2, rel=0.1)
    assert a.stacked.shape == (desk.num_rx * desk.ofdm.num_re,)


def test_doppler_validity_warns(desk):
    assert check_doppler_validity(desk)
    fast = TargetState(desk.target.position_m, np.array([4e4, 4e4]))
    with pytest.warns(UserWarning):
        assert not check_doppler_validity(desk, fast)


def test_sum_rate_formula(desk):
    plan = make_baseline("tdi", desk, 0.5)
    h2 = np.abs(desk.comm.gains) ** 2
    manual = 0.0
    for p in range(desk.num_tx):
        for k in range(desk.num_users):
            snr = h2[p, k] * plan.power[p] * plan.comm[p, k] / desk.comm.noise_power_w
            manual += np.log2(1 + snr).sum()
    assert sum_rate_bpshz(desk, plan) == pytest.approx(manual / desk.ofdm.num_re)
    assert np.all(per_re_rate(desk, plan) >= 0)
    assert sum_rate_bpshz(desk, make_baseline("tdi", desk, 1.0)) == 0.0


def test_rate_grows_with_power(desk):
    plan = make_baseline("fdb", desk, 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert sum_rate_bpshz(desk, plan.scaled(2.0)) > sum_rate_bpshz(desk, plan)
