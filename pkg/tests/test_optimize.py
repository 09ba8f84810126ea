import numpy as np
import pytest
import scipy.optimize as so
import scipy.sparse as sp
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from coopisac import fisher
from coopisac.ambiguity import peak_sidelobe
from coopisac.errors import PhaseIInfeasible
from coopisac.grid import make_baseline, validate, vec
from coopisac.optimize import baseline_suite, best_baseline, feasible_baseline, run_algorithm1
from coopisac.optimize.algorithm import (
    OptimizeTrace,
    SolverOptions,
    TraceRow,
    arrays_to_plan,
    binary_recovery,
    penalty,
    plan_to_arrays,
)
from coopisac.optimize.barrier import (
    ConicProblem,
    LinearConstraint,
    LmiConstraint,
    LogSumConstraint,
    SocGroup,
    solve,
)
from coopisac.optimize.baselines import constrain_plan
from coopisac.optimize.problem import build_model, relaxed_objective, sym_basis, sym_coords, sym_from_coords
from coopisac.optimize.reference import admm_sdp, project_psd, random_sdp
from coopisac.signal import sum_rate_bpshz

# ---------------------------------------------------------------------------
# barrier solver


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_barrier_lp_matches_linprog(seed):
    rng = np.random.default_rng(seed)
    n, m = 4, 6
    G = np.vstack([rng.standard_normal((m, n)), np.eye(n), -np.eye(n)])
    h = np.concatenate([rng.uniform(1, 2, m), np.full(2 * n, 3.0)])
    c = rng.standard_normal(n)
    res = solve(ConicProblem(c, linear=[LinearConstraint(sp.csr_matrix(G), h)]))
    ref = so.linprog(c, A_ub=G, b_ub=h, bounds=[(None, None)] * n, method="highs")
    assert res.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-7)


def test_barrier_second_order_cone():
    # min -x0 - x1  s.t. ||(x0, x1)|| <= 1
    soc = SocGroup(np.array([0, 1]), np.eye(2)[None], np.zeros((1, 2)), np.array([1.0]), np.zeros((1, 2)))
    res = solve(ConicProblem(np.array([-1.0, -1.0]), socs=[soc]))
    assert np.allclose(res.x, [2**-0.5, 2**-0.5], atol=1e-6)


def test_barrier_log_sum():
    # min x  s.t. log(1 + x) >= 1
    ls = LogSumConstraint(np.array([0]), np.array([1.0]), np.array([1.0]), 1.0)
    res = solve(ConicProblem(np.array([1.0]), logsums=[ls]), x0=np.array([5.0]))
    assert res.x[0] == pytest.approx(np.e - 1, rel=1e-6)


def test_barrier_phase_one_from_infeasible_start():
    G = sp.csr_matrix(np.array([[1.0], [-1.0]]))
    res = solve(ConicProblem(np.array([1.0]), linear=[LinearConstraint(G, np.array([5.0, -2.0]))]), x0=np.array([-10.0]))
    assert res.x[0] == pytest.approx(2.0, abs=1e-6)
    assert res.phase1_iterations > 0


def test_barrier_reports_infeasibility():
    G = sp.csr_matrix(np.array([[1.0], [-1.0]]))
    with pytest.raises(PhaseIInfeasible) as err:
        solve(ConicProblem(np.array([1.0]), linear=[LinearConstraint(G, np.array([-1.0, -1.0]), "box")]))
    assert "box" in err.value.constraints


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 6), st.integers(0, 1000))
def test_epigraph_inverse(k, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((k, k))
    L = A @ A.T + 0.5 * np.eye(k)
    B = sym_basis(k)
    coeffs = np.zeros((len(B), 2 * k, 2 * k))
    coeffs[:, :k, :k] = B
    const = np.zeros((2 * k, 2 * k))
    const[:k, k:] = const[k:, :k] = np.eye(k)
    const[k:, k:] = L
    c = np.array([np.trace(b) for b in B])
    res = solve(ConicProblem(c, lmis=[LmiConstraint(np.arange(len(B)), const, coeffs)]), sym_coords(np.linalg.inv(L) + np.eye(k)))
    assert np.allclose(sym_from_coords(res.x, k), np.linalg.inv(L), rtol=1e-6, atol=1e-8)


@settings(max_examples=8, deadline=None)
@given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 1000))
def test_barrier_agrees_with_admm(k, n, seed):
    assume(n <= k * (k + 1) // 2)  # independent coefficient matrices
    F0, Fs, c = random_sdp(k, n, seed)
    ipm = solve(ConicProblem(c, lmis=[LmiConstraint(np.arange(n), F0, Fs)]))
    ref = admm_sdp(F0, Fs, c)
    assert ipm.objective == pytest.approx(ref.objective, rel=1e-4, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(0, 1000))
def test_project_psd(k, seed):
    A = np.random.default_rng(seed).standard_normal((k, k))
    P = project_psd(A)
    assert np.linalg.eigvalsh(P).min() >= -1e-12
    assert np.allclose(project_psd(P), P)


# ---------------------------------------------------------------------------
# design model and helpers


def test_relaxed_objective_matches_crb(opt_desk):
    model = build_model(opt_desk)
    for kind in ("tdb", "fdi", "random"):
        plan = make_baseline(kind, opt_desk, 0.5, seed=1)
        eff = vec(plan.effective_sensing_power()) / model.power_unit
        assert relaxed_objective(model, eff) == pytest.approx(fisher.weighted_crb(opt_desk, plan), rel=1e-7)


def test_plan_array_round_trip(opt_desk):
    plan = make_baseline("fdi", opt_desk, 0.5)
    a, pw = plan_to_arrays(plan)
    back = arrays_to_plan(a, pw, opt_desk.ofdm.shape)
    assert np.array_equal(back.sensing, plan.sensing)
    assert np.array_equal(back.comm, plan.comm)
    assert np.array_equal(back.power, plan.power)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_binary_recovery(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (2, 3, 20))
    a[:, :, :3] = 1e-5
    b = binary_recovery(a, 1e-3)
    assert set(np.unique(b)) <= {0.0, 1.0}
    used = b.sum(axis=(0, 1))
    assert np.all(used[:3] == 0) and np.all(used[3:] == 1)
    flat = a.transpose(2, 0, 1).reshape(20, -1)
    assert np.array_equal(np.argmax(b.transpose(2, 0, 1).reshape(20, -1)[3:], axis=1), np.argmax(flat[3:], axis=1))
    assert penalty(b) == 0.0


def test_trace_monotonicity_rules(tmp_path):
    row = lambda it, obj, rho, stage="power": TraceRow(it, stage, obj, obj, 0.0, rho, 0.0, 0.0, 0.0, 0.0)  # noqa: E731
    tr = OptimizeTrace([row(0, 10.0, 1.0), row(1, 9.0, 1.0), row(1, 9.5, 5.0, "rho"), row(2, 9.4, 5.0), row(3, 20.0, 5.0, "final")])
    assert tr.is_monotone()
    assert np.array_equal(tr.penalized_objective, [10.0, 9.0, 9.5, 9.4])
    bad = OptimizeTrace([row(0, 10.0, 1.0), row(1, 10.1, 1.0)])
    assert not bad.is_monotone()
    tr.relaxed_crb, tr.final_crb, tr.integrality_gap = 9.0, 9.4, 0.4
    text = tr.write_csv(tmp_path / "trace.csv").read_text()
    assert text.startswith("iter,stage,objective") and "integrality_gap,0.4" in text


# ---------------------------------------------------------------------------
# baselines and the full algorithm


def test_constrain_plan_meets_cap(opt_desk):
    plan = make_baseline("tdb", opt_desk, 0.5)
    scaled, c, rate = constrain_plan(plan, opt_desk)
    assert scaled is not None and 0 < c <= 1
    assert peak_sidelobe(scaled, opt_desk) <= opt_desk.sidelobe.beta0
    assert rate == pytest.approx(sum_rate_bpshz(opt_desk, scaled))


@pytest.mark.parametrize("kind", ["tdb", "fdb", "tdi", "fdi"])
def test_feasible_baseline(opt_desk, kind):
    r = feasible_baseline(kind, opt_desk)
    assert r is not None
    assert validate(r.plan, opt_desk) == []
    assert sum_rate_bpshz(opt_desk, r.plan) >= opt_desk.rate_threshold_bpshz
    assert peak_sidelobe(r.plan, opt_desk) <= opt_desk.sidelobe.beta0
    assert r.crb == pytest.approx(fisher.weighted_crb(opt_desk, r.plan))


def test_infeasible_rate_gives_no_baseline(opt_desk):
    hard = opt_desk.replace(rate_threshold_bpshz=100.0)
    assert all(v is None for v in baseline_suite(hard, num_random=2).values())


def test_algorithm_short_run(opt_desk):
    best = best_baseline(baseline_suite(opt_desk, num_random=3))
    plan, trace = run_algorithm1(opt_desk, best.plan, SolverOptions(max_outer_iters=2))
    assert trace.is_monotone(1e-7)
    assert validate(plan, opt_desk) == []
    assert plan.occupancy().max() <= 1
    assert peak_sidelobe(plan, opt_desk) <= opt_desk.sidelobe.beta0 * (1 + 1e-6)
    assert sum_rate_bpshz(opt_desk, plan) >= opt_desk.rate_threshold_bpshz - 1e-6
    assert trace.final_crb == pytest.approx(fisher.weighted_crb(opt_desk, plan), rel=1e-8)
    assert trace.final_crb <= best.crb * (1 + 1e-9)
    assert np.isfinite(trace.integrality_gap)
