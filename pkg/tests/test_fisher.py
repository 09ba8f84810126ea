import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from coopisac import fisher
from coopisac.errors import RankDeficientFusion, SingularFim, UnobservableLink
from coopisac.grid import AllocationPlan, make_baseline
from coopisac.scenario import SPEED_OF_LIGHT, TargetState, desk_scenario, draw_target

KINDS = ("tdb", "fdb", "tdi", "fdi", "random")


def scenario_and_plan(seed, kind, frac):
    sc = desk_scenario(16, 8, seed=seed)
    u, v = draw_target(seed)
    sc = sc.with_target(TargetState(u, v))
    return sc, make_baseline(kind, sc, frac, seed)


def observable(plan):
    """Every Tx senses on at least two subcarriers and two symbols."""
    return all(
        np.count_nonzero(s.any(axis=1)) >= 2 and np.count_nonzero(s.any(axis=0)) >= 2 for s in plan.sensing
    )


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(KINDS), st.sampled_from([0.25, 0.5, 1.0]))
def test_fims_symmetric_psd(seed, kind, frac):
    sc, plan = scenario_and_plan(seed, kind, frac)
    assume(observable(plan))
    F = fisher.fim_eta(sc, plan).matrix
    assert np.allclose(F, F.T)
    assert fisher.symmetric_psd_ok(F)
    rep = fisher.slf_crb(sc, plan)
    assert np.allclose(rep.F_eqv, rep.F_eqv.T)
    assert np.all(np.linalg.eigvalsh(rep.crb_matrix) > 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.floats(0.1, 10.0))
def test_crb_scales_inversely_with_power(seed, c):
    sc, plan = scenario_and_plan(seed, "fdi", 0.5)
    base = fisher.weighted_crb(sc, plan)
    assert fisher.weighted_crb(sc, plan.scaled(c)) == pytest.approx(base / c, rel=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000))
def test_more_sensing_power_lowers_crb(seed):
    sc, plan = scenario_and_plan(seed, "random", 0.5)
    rng = np.random.default_rng(seed)
    boost = AllocationPlan(plan.sensing, plan.comm, plan.power * (1 + rng.uniform(0, 1, plan.power.shape)))
    assert fisher.weighted_crb(sc, boost) <= fisher.weighted_crb(sc, plan) * (1 + 1e-10)


def test_equivalent_fim_is_schur_complement(desk, tdb_plan):
    """The 4x4 state block of the inverse full FIM equals the inverse equivalent FIM."""
    rep = fisher.slf_crb(desk, tdb_plan)
    J = fisher.full_jacobian(fisher.jacobians(desk))
    F_xi = J.T @ rep.F_eta @ J
    assert np.allclose(F_xi, rep.F_xi, rtol=1e-10, atol=0)
    d = np.sqrt(np.diag(F_xi))
    full_inv = np.linalg.inv(F_xi / np.outer(d, d)) / np.outer(d, d)
    assert np.allclose(full_inv[:4, :4], rep.crb_matrix, rtol=1e-6)
    W = desk.weight_matrix()
    assert rep.crb_weighted == pytest.approx(np.trace(W @ full_inv[:4, :4]), rel=1e-6)


def test_local_sigma_is_inverse_block(desk, tdb_plan):
    blocks = fisher.link_fims(desk, tdb_plan)
    sig = fisher.sigma_ml_blocks(desk, tdb_plan)
    for F4, S in zip(blocks, sig):
        d = np.sqrt(np.diag(F4))
        inv = np.linalg.inv(F4 / np.outer(d, d)) / np.outer(d, d)
        assert np.allclose(inv[:2, :2], S, rtol=1e-6)


def test_link_fim_against_coefficients(small):
    plan = make_baseline("fdb", small, 1.0)
    blocks = fisher.link_fims(small, plan)
    links = fisher.link_params(small)
    sigma2 = small.sensing_noise.noise_power_w
    for r, link in enumerate(links):
        coef = fisher.fim_coefficients(small.ofdm, link, sigma2)
        p_eff = plan.effective_sensing_power(r // small.num_rx).ravel(order="F")
        F4 = np.tensordot(p_eff, coef, 1)
        assert np.allclose(F4, blocks[r], rtol=1e-10, atol=1e-12 * np.abs(F4).max())


def test_jacobian_relations(desk):
    jac = fisher.jacobians(desk)
    lam = desk.ofdm.wavelength_m
    assert np.allclose(jac.J_v, jac.J_u * SPEED_OF_LIGHT / lam)
    lm = jac.link_major
    assert np.allclose(lm[0::2], jac.J_s[:4]) and np.allclose(lm[1::2], jac.J_s[4:])


@pytest.mark.parametrize("c", [1.0, 2.0, 10.0])
def test_two_stage_ordering(desk, tdb_plan, c):
    slf = fisher.slf_crb(desk, tdb_plan).crb_weighted
    sig = fisher.sigma_ml_blocks(desk, tdb_plan)
    wls = fisher.ts_crb(desk, c * sig, "inverse").ts_crb
    ls = fisher.ts_crb(desk, c * sig, "identity").ts_crb
    assert wls == pytest.approx(c * slf, rel=1e-8)
    assert ls >= wls * (1 - 1e-9)


def test_psd_dominates():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 2, 2))
    S = np.einsum("kij,klj->kil", A, A) + 0.1 * np.eye(2)
    assert fisher.psd_dominates(1.5 * S, S)
    assert fisher.psd_dominates(S, S)
    assert not fisher.psd_dominates(0.9 * S, S)
    assert fisher.psd_dominates(fisher.block_diag_2x2(2 * S), fisher.block_diag_2x2(S))


def test_gap_check(desk, tdb_plan):
    sig = fisher.sigma_ml_blocks(desk, tdb_plan)
    rep = fisher.gap_check(desk, tdb_plan, 3 * sig)
    assert rep.ordered and rep.dominated
    assert rep.relative_gap == pytest.approx(2.0, rel=1e-8)


def test_plf_information_equals_slf_under_orthogonal_masks(desk, tdb_plan):
    info = fisher.plf_information(desk, tdb_plan)
    rep = fisher.slf_crb(desk, tdb_plan)
    assert np.allclose(info, rep.F_eqv, rtol=1e-8)


def test_unobservable_link(desk):
    plan = make_baseline("tdb", desk, 1.0)
    s = plan.sensing.copy()
    s[1] = 0
    silent = AllocationPlan(s, plan.comm, plan.power)
    with pytest.raises(UnobservableLink):
        fisher.sigma_ml_blocks(desk, silent)


def test_single_symbol_has_no_doppler_information():
    sc = desk_scenario(16, 8)
    plan = make_baseline("tdb", sc, 0.25)
    assert not observable(plan)
    with pytest.raises((SingularFim, UnobservableLink)):
        fisher.slf_crb(sc, plan)


def test_rank_deficient_fusion(desk, tdb_plan):
    sig = fisher.sigma_ml_blocks(desk, tdb_plan)
    J = fisher.jacobians(desk).link_major
    with pytest.raises(RankDeficientFusion):
        fisher.fusion_covariance(J[:3], fisher.block_diag_2x2(sig)[:3, :3], np.eye(3))


def test_report_csv(tmp_path, desk, tdb_plan):
    rep = fisher.slf_crb(desk, tdb_plan)
    files = rep.write_csv(tmp_path)
    assert (tmp_path / "fisher_report.csv") in files
    text = (tmp_path / "fisher_report.csv").read_text()
    assert f"crb_weighted,{rep.crb_weighted!r}" in text
    assert rep.position_bound + rep.velocity_bound == pytest.approx(rep.crb_weighted)
    ts = fisher.ts_crb(desk, fisher.sigma_ml_blocks(desk, tdb_plan), "identity", mode=fisher.TsMode.ML)
    ts.write_csv(tmp_path)
    assert "mode,ml" in (tmp_path / "tscrb_report.csv").read_text()
