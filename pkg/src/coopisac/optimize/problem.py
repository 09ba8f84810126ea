"""LMI formulation of the CRB-minimizing allocation subproblems.

The SLF equivalent FIM is linear in the effective sensing power ``a ⊙ p``:
every RE of Tx p adds a fixed matrix ``B_{p,e}`` to ``F_xi`` (over the
state and the link reflections).  The design problem is then

    min tr(W L^-1)  s.t.  [[F_ss - L, F_sb], [F_sb^T, F_bb]] ⪰ 0,

handled through the epigraph ``[[U, W^1/2], [W^1/2, L]] ⪰ 0``, min tr(U).
All matrices are congruence-scaled by ``D = diag(F_ref)^-1/2`` and the
objective is normalized by a reference CRB so the solver sees O(1) numbers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from coopisac import fisher
from coopisac.ambiguity import SidelobeLattice, gamma_matrix
from coopisac.grid import AllocationPlan, vec
from coopisac.optimize.barrier import (
    BarrierOptions,
    ConicProblem,
    LinearConstraint,
    LmiConstraint,
    LogSumConstraint,
    SocGroup,
    solve,
)
from coopisac.errors import Infeasible, PhaseIInfeasible


def sym_basis(k: int) -> np.ndarray:
    """Basis of symmetric k x k matrices, shape (k(k+1)/2, k, k)."""
    out = []
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return np.array(out)


def sym_from_coords(x: np.ndarray, k: int) -> np.ndarray:
    return np.tensordot(x, sym_basis(k), axes=1)


def sym_coords(A: np.ndarray) -> np.ndarray:
    k = A.shape[0]
    iu = np.triu_indices(k)
    return A[iu]


@dataclass(eq=False)
class DesignModel:
    """Everything about a scenario the subproblems need, precomputed once.

    ``basis[p]`` is (MN, d, d): the scaled contribution of one watt on RE e of
    Tx p to the state/reflection FIM.  ``crb_ref`` normalizes the objective.
    """

    scenario: object
    target: object
    basis: np.ndarray  # (P, MN, d, d)
    scale: np.ndarray  # (d,) congruence scaling D
    w_tilde: np.ndarray  # (4, 4) scaled, normalized weight
    w_half: np.ndarray
    crb_ref: float
    power_unit: float
    sidelobe_kernel: np.ndarray  # (S, MN) complex, half lattice
    rate_gain: np.ndarray  # (P, K, MN) per-watt SNR

    @property
    def num_tx(self) -> int:
        return self.basis.shape[0]

    @property
    def num_re(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[2]

    @property
    def num_links(self) -> int:
        return (self.dim - 4) // 2


def _raw_basis(scenario, target) -> np.ndarray:
    P, Q = scenario.num_tx, scenario.num_rx
    L = P * Q
    J = fisher.full_jacobian(fisher.jacobians(scenario, target))
    sigma2 = scenario.sensing_noise.noise_power_w
    MN = scenario.ofdm.num_re
    d = 4 + 2 * L
    out = np.zeros((P, MN, d, d))
    for r, link in enumerate(fisher.link_params(scenario, target)):
        C = fisher.fim_coefficients(scenario.ofdm, link, sigma2)
        Jr = J[[r, L + r, 2 * L + r, 3 * L + r]]
        out[r // Q] += np.einsum("ai,eab,bj->eij", Jr, C, Jr)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def build_model(scenario, target=None, reference: AllocationPlan | None = None) -> DesignModel:
    """Precompute the FIM basis, scaling and constraint data.

    ``reference`` (default: uniform power on every RE, all sensing) fixes the
    congruence scaling and the CRB normalization.
    """
    target = scenario.target if target is None else target
    P, K = scenario.num_tx, scenario.num_users
    N, M = scenario.ofdm.shape
    MN = N * M
    unit = float(np.max(scenario.budgets)) / MN
    raw = _raw_basis(scenario, target) * unit
    if reference is None:
        eff = np.ones((P, MN))
    else:
        eff = vec(reference.effective_sensing_power()) / unit
    lattice = SidelobeLattice(scenario.sidelobe.l_max, scenario.sidelobe.nu_max)
    kern = gamma_matrix(lattice.offsets(half=True), (N, M))
    h2 = np.abs(scenario.comm.gains.reshape(P, K, N, M)) ** 2
    gain = vec(h2).reshape(P, K, MN) * unit / scenario.comm.noise_power_w
    model = DesignModel(scenario, target, raw, np.ones(len(raw[0, 0])), None, None, 1.0, unit, kern, gain)
    return reframe(model, eff)


def reframe(model: DesignModel, eff: np.ndarray) -> DesignModel:
    """Re-scale the model around effective power ``eff`` (P, MN), in units.

    The congruence ``D = diag(F(eff))^-1/2`` and the normalization by the CRB
    at ``eff`` keep every subproblem near unit scale, whatever its plan.
    """
    raw = model.basis / np.outer(model.scale, model.scale)
    F = np.einsum("pe,peij->ij", eff, raw)
    diag = np.diag(F).copy()
    diag[diag <= 0] = 1.0
    D = 1.0 / np.sqrt(diag)
    Fs = F * np.outer(D, D)
    W_s = model.scenario.weight_matrix() * np.outer(D[:4], D[:4])
    crb_ref = float(np.trace(W_s @ np.linalg.inv(eqv_from_full(Fs, 4))))
    if not np.isfinite(crb_ref) or crb_ref <= 0:
        raise Infeasible("reference plan has a singular FIM", ("fim",), "scaling")
    w_tilde = W_s / crb_ref
    return dataclasses.replace(
        model,
        basis=raw * np.outer(D, D),
        scale=D,
        w_tilde=w_tilde,
        w_half=np.real(sla.sqrtm(w_tilde)),
        crb_ref=crb_ref,
    )


def eqv_from_full(F: np.ndarray, ns: int = 4) -> np.ndarray:
    """Schur complement over the nuisance block (dropping zero rows)."""
    keep = np.where(np.diag(F)[ns:] > 0)[0] + ns
    A = F[:ns, :ns]
    if len(keep):
        B = F[:ns][:, keep]
        C = F[np.ix_(keep, keep)]
        A = A - B @ np.linalg.solve(C, B.T)
    return 0.5 * (A + A.T)


def scaled_fim(model: DesignModel, eff: np.ndarray) -> np.ndarray:
    """``F_xi`` in scaled coordinates for effective power ``eff`` (P, MN) in units."""
    return np.einsum("pe,peij->ij", eff, model.basis)


def relaxed_objective(model: DesignModel, eff: np.ndarray) -> float:
    """``tr(W F_eqv^-1)`` in physical units for effective power ``eff`` (P, MN)."""
    Fe = eqv_from_full(scaled_fim(model, eff))
    try:
        val = np.trace(model.w_tilde @ np.linalg.inv(Fe))
    except np.linalg.LinAlgError:
        return float("inf")
    return float(val * model.crb_ref) if val > 0 else float("inf")


def active_beta(model: DesignModel, eff: np.ndarray) -> np.ndarray:
    """Indices of the xi coordinates kept in the LMI (state + observable links)."""
    L = model.num_links
    Q = L // model.num_tx
    on = eff.sum(axis=1) > 0
    links = np.array([r for r in range(L) if on[r // Q]], dtype=int)
    return np.concatenate([np.arange(4), 4 + links, 4 + L + links])


# ---------------------------------------------------------------------------
# LMI builder


@dataclass(eq=False)
class LmiDescription:
    """Affine matrix map ``const + sum_i x_i coeffs[i]`` over named variables."""

    const: np.ndarray
    coeffs: np.ndarray
    index: np.ndarray

    def evaluate(self, x) -> np.ndarray:
        return self.const + np.tensordot(np.asarray(x)[self.index], self.coeffs, axes=1)


def build_lmi(model: DesignModel, coef: np.ndarray, fixed_eff: np.ndarray | None, keep, var_index, l_index):
    """FIM LMI ``[[F_ss - L, F_sb], [F_sb^T, F_bb]] ⪰ 0`` (scaled).

    ``coef`` is (V, P, MN)-shaped implicitly through ``var_index``: each
    decision variable i multiplies ``coef[i] * basis[p_i, e_i]``.  With no
    variables (``var_index`` empty) this reduces to a constant matrix.
    ``l_index`` are the 10 coordinates of the symmetric ``L``.
    """
    k = len(keep)
    const = np.zeros((k, k))
    if fixed_eff is not None:
        const = scaled_fim(model, fixed_eff)[np.ix_(keep, keep)]
    pe, scale = coef
    mats = model.basis[pe[:, 0], pe[:, 1]][:, keep][:, :, keep] * scale[:, None, None]
    Lb = np.zeros((10, k, k))
    Lb[:, :4, :4] = -sym_basis(4)
    coeffs = np.concatenate([mats, Lb]) if len(mats) else Lb
    index = np.concatenate([np.asarray(var_index, dtype=int), np.asarray(l_index, dtype=int)])
    return LmiDescription(const, coeffs, index)


def epigraph_lmi(model: DesignModel, u_index, l_index) -> LmiConstraint:
    """``[[U, W^1/2], [W^1/2, L]] ⪰ 0`` so that ``tr U >= tr(W L^-1)``."""
    B = sym_basis(4)
    coeffs = np.zeros((20, 8, 8))
    coeffs[:10, :4, :4] = B
    coeffs[10:, 4:, 4:] = B
    const = np.zeros((8, 8))
    const[:4, 4:] = model.w_half
    const[4:, :4] = model.w_half
    return LmiConstraint(np.concatenate([u_index, l_index]), const, coeffs, "epigraph")


def _epigraph_start(model: DesignModel, F_scaled_keep) -> tuple[np.ndarray, np.ndarray]:
    Fe = eqv_from_full(F_scaled_keep)
    w, V = np.linalg.eigh(Fe)
    w = np.maximum(w, 1e-9 * max(w.max(), 1e-300))
    L0 = (V * (0.5 * w)) @ V.T
    U0 = model.w_half @ np.linalg.inv(L0) @ model.w_half
    U0 = U0 + 0.5 * np.trace(U0) / 4 * np.eye(4)
    return sym_coords(L0), sym_coords(U0)


@dataclass
class SubproblemStats:
    objective: float  # relaxed tr(W L^-1) in physical units
    surrogate: float  # full scaled objective incl. penalty terms (physical units)
    newton_iterations: int
    phase1_iterations: int
    gap: float


def _sidelobe_groups(model: DesignModel, tx_vars: dict, beta0: float) -> list:
    """One SOC group per Tx: ``|sum_e K_se c_e x_e| <= beta0`` (scaled by beta0)."""
    groups = []
    for p, (idx, re, c) in tx_vars.items():
        if len(idx) == 0 or len(model.sidelobe_kernel) == 0:
            continue
        K = model.sidelobe_kernel[:, re] * (c * model.power_unit / beta0)
        S = len(K)
        E = np.stack([K.real, K.imag], axis=1)
        groups.append(SocGroup(np.asarray(idx), E, np.zeros((S, 2)), np.ones(S), np.zeros((S, len(idx))), "sidelobe"))
    return groups


def _solve(prob, x0, opts, stage):
    try:
        return solve(prob, x0, opts)
    except PhaseIInfeasible as exc:
        raise Infeasible(str(exc), exc.constraints, stage) from exc


def solve_power_subproblem(
    model: DesignModel,
    a: np.ndarray,
    warm_power: np.ndarray | None = None,
    use_rate: bool = True,
    use_sidelobe: bool = True,
    opts: BarrierOptions | None = None,
):
    """Optimal per-RE power for fixed (relaxed) selection ``a`` (P, K+1, MN).

    Returns ``(power (P, MN) in W, L (4x4 physical), stats)``.
    """
    sc = model.scenario
    P, MN = model.num_tx, model.num_re
    K = a.shape[1] - 1
    used = a.sum(axis=1) > 0
    pe = np.argwhere(used)
    nv = len(pe)
    if nv == 0:
        raise Infeasible("no RE is selected", ("lmi",), "power")
    sens = a[pe[:, 0], 0, pe[:, 1]]
    if warm_power is None:
        warm = np.zeros((P, MN))
        for p in range(P):
            if used[p].any():
                warm[p, used[p]] = sc.budgets[p] / used[p].sum()
    else:
        warm = np.asarray(warm_power, dtype=float)
    model = reframe(model, a[:, 0] * warm / model.power_unit)
    keep = active_beta(model, (a[:, 0] > 0).astype(float))
    lo, uo = nv, nv + 10
    lmi = build_lmi(model, (pe, sens), None, keep, np.arange(nv), np.arange(lo, lo + 10))
    cons_lmi = [LmiConstraint(lmi.index, lmi.const, lmi.coeffs, "fim"), epigraph_lmi(model, np.arange(uo, uo + 10), np.arange(lo, lo + 10))]
    n = nv + 20
    # budgets per Tx, and p >= 0
    G = sp.vstack(
        [
            sp.csr_matrix((np.ones(nv), (pe[:, 0], np.arange(nv))), shape=(P, n)),
            sp.csr_matrix((-np.ones(nv), (np.arange(nv), np.arange(nv))), shape=(nv, n)),
        ]
    ).tocsr()
    h = np.concatenate([sc.budgets / model.power_unit, np.zeros(nv)])
    linear = [LinearConstraint(G, h, "budget_nonneg")]
    logsums = []
    if use_rate and K > 0 and sc.rate_threshold_bpshz > 0:
        idx, gain = [], []
        for k in range(K):
            ck = a[pe[:, 0], 1 + k, pe[:, 1]]
            on = ck > 0
            idx.append(np.arange(nv)[on])
            gain.append(model.rate_gain[pe[on, 0], k, pe[on, 1]] * ck[on])
        idx, gain = np.concatenate(idx), np.concatenate(gain)
        logsums.append(LogSumConstraint(idx, gain, np.full(len(idx), 1.0 / (MN * np.log(2))), sc.rate_threshold_bpshz, name="rate"))
    socs = []
    if use_sidelobe:
        tx_vars = {}
        for p in range(P):
            sel = np.where((pe[:, 0] == p) & (sens > 0))[0]
            tx_vars[p] = (sel, pe[sel, 1], sens[sel])
        socs = _sidelobe_groups(model, tx_vars, sc.sidelobe.beta0)
    c = np.zeros(n)
    c[uo:uo + 10] = [np.trace(E) for E in sym_basis(4)]
    prob = ConicProblem(c, cons_lmi, socs, linear, logsums)

    x0 = np.zeros(n)
    x0[:nv] = 0.999 * warm[pe[:, 0], pe[:, 1]] / model.power_unit + 1e-6
    x0[lo:lo + 10], x0[uo:uo + 10] = _epigraph_start(model, lmi.evaluate(x0))
    res = _solve(prob, x0, opts, "power")
    power = np.zeros((P, MN))
    power[pe[:, 0], pe[:, 1]] = np.maximum(res.x[:nv], 0.0) * model.power_unit
    Lm = _unscale_L(model, sym_from_coords(res.x[lo:lo + 10], 4))
    obj = float(res.objective * model.crb_ref)
    return power, Lm, SubproblemStats(obj, obj, res.newton_iterations, res.phase1_iterations, res.gap * model.crb_ref)


def _unscale_L(model, Lt):
    Dinv = 1.0 / model.scale[:4]
    return Lt * np.outer(Dinv, Dinv)


def solve_selection_subproblem(
    model: DesignModel,
    power: np.ndarray,
    a_prev: np.ndarray,
    rho1: float,
    use_rate: bool = True,
    use_sidelobe: bool = True,
    opts: BarrierOptions | None = None,
):
    """MM step on the relaxed selection for fixed power (P, MN) in W.

    Minimizes ``tr(W L^-1) + rho1 * sum a (1 - 2 a_prev)`` over the box,
    exclusivity, FIM LMI, rate and sidelobe constraints.
    Returns ``(a (P, K+1, MN), L, stats)``; ``stats.surrogate`` includes the
    constant ``rho1 * ||a_prev||^2`` so it upper-bounds the true penalized
    objective.
    """
    sc = model.scenario
    P, K1, MN = a_prev.shape
    K = K1 - 1
    pw = power / model.power_unit
    on = pw > 0
    trip = np.array([(p, k, e) for p in range(P) for k in range(K1) for e in range(MN) if on[p, e]], dtype=int)
    if len(trip) == 0:
        raise Infeasible("no power anywhere", ("lmi",), "selection")
    nv = len(trip)
    lo, uo = nv, nv + 10
    n = nv + 20
    model = reframe(model, a_prev[:, 0] * pw + 1e-3 * pw)
    sens_vars = np.where(trip[:, 1] == 0)[0]
    pe = trip[sens_vars][:, [0, 2]]
    keep = active_beta(model, pw * on)
    lmi = build_lmi(model, (pe, pw[pe[:, 0], pe[:, 1]]), None, keep, sens_vars, np.arange(lo, lo + 10))
    cons_lmi = [LmiConstraint(lmi.index, lmi.const, lmi.coeffs, "fim"), epigraph_lmi(model, np.arange(uo, uo + 10), np.arange(lo, lo + 10))]
    # box and exclusivity
    eye = sp.identity(nv, format="csr")
    box = sp.hstack([sp.vstack([eye, -eye]), sp.csr_matrix((2 * nv, 20))]).tocsr()
    excl = sp.csr_matrix((np.ones(nv), (trip[:, 2], np.arange(nv))), shape=(MN, n))
    nonempty = np.asarray(excl.sum(axis=1)).ravel() > 0
    G = sp.vstack([box, excl[nonempty]]).tocsr()
    h = np.concatenate([np.ones(nv), np.zeros(nv), np.ones(nonempty.sum())])
    linear = [LinearConstraint(G, h, "box_exclusivity")]
    logsums = []
    if use_rate and K > 0 and sc.rate_threshold_bpshz > 0:
        cv = np.where(trip[:, 1] > 0)[0]
        gain = model.rate_gain[trip[cv, 0], trip[cv, 1] - 1, trip[cv, 2]] * pw[trip[cv, 0], trip[cv, 2]]
        logsums.append(LogSumConstraint(cv, gain, np.full(len(cv), 1.0 / (MN * np.log(2))), sc.rate_threshold_bpshz, name="rate"))
    socs = []
    if use_sidelobe:
        tx_vars = {}
        for p in range(P):
            sel = sens_vars[trip[sens_vars, 0] == p]
            tx_vars[p] = (sel, trip[sel, 2], pw[p, trip[sel, 2]])
        socs = _sidelobe_groups(model, tx_vars, sc.sidelobe.beta0)
    rho_t = rho1 / model.crb_ref
    c = np.zeros(n)
    c[uo:uo + 10] = [np.trace(E) for E in sym_basis(4)]
    ap = a_prev[trip[:, 0], trip[:, 1], trip[:, 2]]
    c[:nv] = rho_t * (1.0 - 2.0 * ap)
    prob = ConicProblem(c, cons_lmi, socs, linear, logsums)

    x0 = np.zeros(n)
    # pull the previous iterate slightly into the interior of box/exclusivity
    x0[:nv] = 0.98 * ap + 0.01 / K1
    x0[lo:lo + 10], x0[uo:uo + 10] = _epigraph_start(model, lmi.evaluate(x0))
    res = _solve(prob, x0, opts, "selection")
    a = np.zeros_like(a_prev)
    a[trip[:, 0], trip[:, 1], trip[:, 2]] = np.clip(res.x[:nv], 0.0, 1.0)
    Lm = _unscale_L(model, sym_from_coords(res.x[lo:lo + 10], 4))
    const = rho1 * float(np.sum(a_prev**2))
    surrogate = float(res.objective * model.crb_ref + const)
    tr_u = float(c[uo:uo + 10] @ res.x[uo:uo + 10]) * model.crb_ref
    return a, Lm, SubproblemStats(tr_u, surrogate, res.newton_iterations, res.phase1_iterations, res.gap * model.crb_ref)
