"""Block-coordinate descent with a concave binary penalty (Algorithm 1).

The relaxed problem alternates two convex steps on the penalized objective
``J(a, p) = tr(W F_eqv(a0 ⊙ p)^-1) + rho1 * sum a (1 - a)``:

* power: exact minimization over ``p`` for fixed ``a``;
* selection: one majorization step over ``a`` for fixed ``p`` (the concave
  penalty is replaced by its tangent at the previous iterate).

Both steps can only decrease ``J`` up to solver tolerance; a step that would
raise it is rejected.  The relaxed selection is then rounded (largest entry
per RE, tiny ones dropped) and the power re-optimized for the binary plan.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from coopisac import fisher
from coopisac.ambiguity import SidelobeLattice, peak_sidelobe, window_values
from coopisac.errors import CoopIsacError, Infeasible
from coopisac.grid import AllocationPlan, unvec, validate, vec
from coopisac.optimize.barrier import BarrierOptions
from coopisac.optimize.problem import (
    DesignModel,
    build_model,
    relaxed_objective,
    solve_power_subproblem,
    solve_selection_subproblem,
)
from coopisac.signal import sum_rate_bpshz


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iters: int = 15
    outer_tol: float = 1e-4
    barrier: BarrierOptions = field(default_factory=BarrierOptions)
    rho1: float | None = None  # absolute; default rho1_rel * initial CRB
    rho1_rel: float = 1e-3
    rho1_growth: float = 5.0
    frac_drop: float = 0.1  # required relative drop of max a(1-a) per iteration
    step_tol: float = 1e-3  # max |a change| counted as a fixed point
    binary_recovery_threshold: float = 1e-3
    init_mix: float = 0.5  # weight of the initial plan vs a uniform split
    use_rate: bool = True
    use_sidelobe: bool = True
    monotone_slack: float = 1e-7

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.outer_tol <= 0 or self.binary_recovery_threshold <= 0:
            raise ValueError("iteration counts and tolerances must be positive")
        if not 0 <= self.init_mix <= 1:
            raise ValueError("init_mix must lie in [0, 1]")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    stage: str
    objective: float  # penalized
    crb: float
    penalty: float
    rho1: float
    max_frac: float
    sidelobe_peak: float
    rate: float
    residual: float  # worst constraint violation (<= 0 is feasible)


@dataclass
class OptimizeTrace:
    rows: list[TraceRow] = field(default_factory=list)
    relaxed_crb: float = float("nan")
    final_crb: float = float("nan")
    integrality_gap: float = float("nan")
    used_fallback: bool = False
    converged: bool = False

    @property
    def penalized_objective(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows if r.stage != "final"])

    def is_monotone(self, rel: float = 1e-7) -> bool:
        """Penalized objective nonincreasing at a fixed rho1.

        Raising rho1 changes the objective itself, so comparisons restart
        whenever it changes.
        """
        rows = [r for r in self.rows if r.stage != "final"]
        for prev, cur in zip(rows, rows[1:]):
            if cur.rho1 != prev.rho1:
                continue
            if cur.objective > prev.objective + rel * abs(prev.objective):
                return False
        return True

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "stage", "objective", "crb", "penalty", "rho1", "max_frac", "sidelobe_peak", "rate", "residual"])
            for r in self.rows:
                w.writerow(
                    [r.iteration, r.stage, f"{r.objective:.12g}", f"{r.crb:.12g}", f"{r.penalty:.12g}", f"{r.rho1:.6g}",
                     f"{r.max_frac:.6g}", f"{r.sidelobe_peak:.12g}", f"{r.rate:.12g}", f"{r.residual:.3g}"]
                )
            w.writerow([])
            w.writerow(["relaxed_crb", f"{self.relaxed_crb:.12g}"])
            w.writerow(["final_crb", f"{self.final_crb:.12g}"])
            w.writerow(["integrality_gap", f"{self.integrality_gap:.12g}"])
        return path


# ---------------------------------------------------------------------------
# conversions between plans and the (P, K+1, MN) / (P, MN) arrays


def plan_to_arrays(plan: AllocationPlan) -> tuple[np.ndarray, np.ndarray]:
    a = np.concatenate([vec(plan.sensing)[:, None], vec(plan.comm)], axis=1)
    return a, vec(plan.power)


def arrays_to_plan(a: np.ndarray, power: np.ndarray, shape) -> AllocationPlan:
    grids = lambda x: np.stack([unvec(row, shape) for row in x])  # noqa: E731
    P, K1, MN = a.shape
    sensing = grids(a[:, 0])
    comm = np.stack([grids(a[p, 1:]) for p in range(P)]) if K1 > 1 else np.zeros((P, 0) + tuple(shape))
    return AllocationPlan(sensing, comm, grids(power))


def binary_recovery(a: np.ndarray, threshold: float = 1e-3) -> np.ndarray:
    """Keep the largest entry per RE; leave the RE empty if all are below ``threshold``."""
    P, K1, MN = a.shape
    flat = a.transpose(2, 0, 1).reshape(MN, P * K1)
    best = np.argmax(flat, axis=1)
    keep = flat[np.arange(MN), best] >= threshold
    out = np.zeros_like(flat)
    out[np.arange(MN)[keep], best[keep]] = 1.0
    return out.reshape(MN, P, K1).transpose(1, 2, 0)


def relaxed_rate(model: DesignModel, a: np.ndarray, power: np.ndarray) -> float:
    if a.shape[1] < 2:
        return 0.0
    snr = model.rate_gain * a[:, 1:] * (power / model.power_unit)[:, None]
    return float(np.log2(1.0 + snr).sum() / model.num_re)


def relaxed_sidelobe_peak(model: DesignModel, a: np.ndarray, power: np.ndarray) -> float:
    sc = model.scenario
    lattice = SidelobeLattice(sc.sidelobe.l_max, sc.sidelobe.nu_max)
    shape = sc.ofdm.shape
    peak = 0.0
    for p in range(a.shape[0]):
        _, vals = window_values(unvec(a[p, 0] * power[p], shape), lattice)
        if len(vals):
            peak = max(peak, float(np.abs(vals).max()))
    return peak


def penalty(a: np.ndarray) -> float:
    return float(np.sum(a * (1.0 - a)))


def _row(model, it, stage, a, power, rho1, opts) -> TraceRow:
    sc = model.scenario
    crb = relaxed_objective(model, a[:, 0] * power / model.power_unit)
    pen = penalty(a)
    rate = relaxed_rate(model, a, power)
    peak = relaxed_sidelobe_peak(model, a, power)
    budget = float(np.max(power.sum(axis=1) - sc.budgets))
    resid = [budget, float(np.max(a.sum(axis=(0, 1)) - 1.0))]
    if opts.use_sidelobe:
        resid.append(peak - sc.sidelobe.beta0)
    if opts.use_rate and a.shape[1] > 1:
        resid.append(sc.rate_threshold_bpshz - rate)
    return TraceRow(it, stage, crb + rho1 * pen, crb, pen, rho1, float(np.max(a * (1 - a))), peak, rate, max(resid))


def initial_relaxation(init: AllocationPlan, mix: float) -> np.ndarray:
    a, _ = plan_to_arrays(init)
    P, K1, _ = a.shape
    return mix * a + (1.0 - mix) / (P * K1)


def _plan_ok(plan, scenario, opts) -> bool:
    if validate(plan, scenario, tol=1e-9):
        return False
    if opts.use_sidelobe and peak_sidelobe(plan, scenario) > scenario.sidelobe.beta0 * (1 + 1e-6):
        return False
    if opts.use_rate and plan.num_users > 0 and sum_rate_bpshz(scenario, plan) < scenario.rate_threshold_bpshz - 1e-6:
        return False
    return True


def run_algorithm1(
    scenario,
    init: AllocationPlan,
    opts: SolverOptions | None = None,
    target=None,
    model: DesignModel | None = None,
) -> tuple[AllocationPlan, OptimizeTrace]:
    """Joint RE selection and power allocation from a feasible ``init`` plan.

    ``init`` also serves as the incumbent: if the rounded plan ends up worse
    (or infeasible), the power-optimized ``init`` mask is returned and the
    trace is flagged ``used_fallback``.
    """
    opts = opts or SolverOptions()
    target = scenario.target if target is None else target
    model = model or build_model(scenario, target)
    bo = opts.barrier
    kw = dict(use_rate=opts.use_rate, use_sidelobe=opts.use_sidelobe, opts=bo)
    shape = scenario.ofdm.shape
    trace = OptimizeTrace()

    # incumbent: the initial binary mask with optimized power
    a_init, p_init = plan_to_arrays(init)
    incumbent = None
    try:
        p_inc, _, _ = solve_power_subproblem(model, a_init, **kw)
        inc_plan = arrays_to_plan(a_init, p_inc, shape)
        if _plan_ok(inc_plan, scenario, opts):
            incumbent = (fisher.weighted_crb(scenario, inc_plan, target), inc_plan)
    except (Infeasible, CoopIsacError):
        pass
    if incumbent is None and _plan_ok(init, scenario, opts):
        incumbent = (fisher.weighted_crb(scenario, init, target), init)

    # relaxed BCD
    a = initial_relaxation(init, opts.init_mix)
    power, _, _ = solve_power_subproblem(model, a, **kw)
    crb0 = relaxed_objective(model, a[:, 0] * power / model.power_unit)
    rho1 = opts.rho1 if opts.rho1 is not None else opts.rho1_rel * crb0
    cur = _row(model, 0, "power", a, power, rho1, opts)
    trace.rows.append(cur)
    for it in range(1, opts.max_outer_iters + 1):
        prev_obj, prev_frac, a_old = cur.objective, cur.max_frac, a
        try:
            a_new, _, _ = solve_selection_subproblem(model, power, a, rho1, **kw)
            row = _row(model, it, "selection", a_new, power, rho1, opts)
            if row.objective <= cur.objective + opts.monotone_slack * abs(cur.objective):
                a, cur = a_new, row
                trace.rows.append(cur)
            p_new, _, _ = solve_power_subproblem(model, a, warm_power=power, **kw)
            row = _row(model, it, "power", a, p_new, rho1, opts)
            if row.objective <= cur.objective + opts.monotone_slack * abs(cur.objective):
                power, cur = p_new, row
                trace.rows.append(cur)
        except CoopIsacError:
            break
        rel = abs(prev_obj - cur.objective) / max(abs(prev_obj), 1e-300)
        # a fixed point of the MM map: ties at a = 1/2 have a flat tangent and
        # no rho1 moves them, so rounding takes over from here
        if rel < opts.outer_tol and (cur.max_frac < 0.01 or np.max(np.abs(a - a_old)) < opts.step_tol):
            trace.converged = True
            break
        if cur.max_frac > (1.0 - opts.frac_drop) * prev_frac or rel < opts.outer_tol:
            rho1 *= opts.rho1_growth
            cur = _row(model, it, "rho", a, power, rho1, opts)
            trace.rows.append(cur)
    trace.relaxed_crb = cur.crb

    # binary recovery and final power
    candidate = None
    a_bin = binary_recovery(a, opts.binary_recovery_threshold)
    try:
        p_bin, _, _ = solve_power_subproblem(model, a_bin, warm_power=power * (a_bin.sum(axis=1) > 0), **kw)
        plan = arrays_to_plan(a_bin, p_bin, shape)
        if _plan_ok(plan, scenario, opts):
            candidate = (fisher.weighted_crb(scenario, plan, target), plan)
    except CoopIsacError:
        pass

    if candidate is None and incumbent is None:
        raise Infeasible("no feasible binary plan found", ("rate", "sidelobe"), "recovery")
    if candidate is None or (incumbent is not None and incumbent[0] < candidate[0]):
        final_crb, final = incumbent
        trace.used_fallback = True
    else:
        final_crb, final = candidate
    trace.final_crb = final_crb
    trace.integrality_gap = final_crb - trace.relaxed_crb
    a_f, p_f = plan_to_arrays(final)
    last = _row(model, trace.rows[-1].iteration + 1, "final", a_f, p_f, rho1, opts)
    trace.rows.append(last)
    return final, trace
