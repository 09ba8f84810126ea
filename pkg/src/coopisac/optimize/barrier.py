"""Small log-barrier interior-point solver for the allocation subproblems.

Supports a linear objective (plus an optional separable quadratic term)
subject to

* affine LMIs ``F0 + sum_i x_i F_i ⪰ 0`` (log-det barrier),
* second-order cones ``||d + E x|| <= r0 + r^T x`` (sidelobe moduli),
* sparse linear inequalities ``G x <= h``,
* concave log-sum constraints ``sum_j w_j log(1 + g_j x_j) + l^T x >= eta``.

Each constraint touches only a subset ``index`` of the variables.  Newton
systems are dense; problem sizes here are a few hundred variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from coopisac.errors import NumericalBreakdown, PhaseIInfeasible, SolverStall


@dataclass(eq=False)
class LmiConstraint:
    index: np.ndarray
    const: np.ndarray  # (k, k)
    coeffs: np.ndarray  # (len(index), k, k)
    name: str = "lmi"

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def matrix(self, x) -> np.ndarray:
        return self.const + np.tensordot(x[self.index], self.coeffs, axes=1)


@dataclass(eq=False)
class SocGroup:
    """``S`` cones sharing one variable subset: ``||d_s + E_s x|| <= r0_s + r_s^T x``."""

    index: np.ndarray
    E: np.ndarray  # (S, 2, len(index))
    d: np.ndarray  # (S, 2)
    r0: np.ndarray  # (S,)
    r: np.ndarray  # (S, len(index))
    name: str = "soc"

    @property
    def count(self) -> int:
        return len(self.r0)

    def parts(self, x):
        xi = x[self.index]
        u = self.d + np.einsum("sab,b->sa", self.E, xi)
        w = self.r0 + self.r @ xi
        return u, w


@dataclass(eq=False)
class LinearConstraint:
    G: sp.csr_matrix  # (m, n)
    h: np.ndarray
    name: str = "linear"


@dataclass(eq=False)
class LogSumConstraint:
    """``sum_j w_j log(1 + g_j x[index_j]) + lin . x[lin_index] >= threshold``."""

    index: np.ndarray
    gain: np.ndarray
    weight: np.ndarray
    threshold: float
    lin_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    lin_coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    name: str = "logsum"

    def value(self, x):
        q = 1.0 + self.gain * x[self.index]
        if np.any(q <= 0):
            return None, q
        return float(self.weight @ np.log(q) + self.lin_coef @ x[self.lin_index]), q


@dataclass(eq=False)
class ConicProblem:
    c: np.ndarray
    lmis: list = field(default_factory=list)
    socs: list = field(default_factory=list)
    linear: list = field(default_factory=list)
    logsums: list = field(default_factory=list)
    quad_diag: np.ndarray | None = None  # optional 0.5 * sum q_i (x_i - x_ref_i)^2
    quad_ref: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def degree(self) -> float:
        """Barrier parameter: total number of 'barrier units'."""
        return float(
            sum(l.size for l in self.lmis)
            + sum(2 * s.count for s in self.socs)
            + sum(len(l.h) for l in self.linear)
            + len(self.logsums)
        )

    def objective(self, x) -> float:
        val = float(self.c @ x)
        if self.quad_diag is not None:
            val += 0.5 * float(self.quad_diag @ (x - self.quad_ref) ** 2)
        return val

    # -- barrier --------------------------------------------------------

    def barrier(self, x, order: int = 2):
        """Barrier value (and gradient/Hessian); ``None`` outside the domain."""
        n = self.n
        val = 0.0
        grad = np.zeros(n) if order >= 1 else None
        hess = np.zeros((n, n)) if order >= 2 else None
        for lmi in self.lmis:
            S = lmi.matrix(x)
            try:
                Lc = np.linalg.cholesky(0.5 * (S + S.T))
            except np.linalg.LinAlgError:
                return None
            val -= 2.0 * np.sum(np.log(np.diag(Lc)))
            if order >= 1:
                Li = sla.solve_triangular(Lc, np.eye(len(S)), lower=True)
                A = np.matmul(np.matmul(Li, lmi.coeffs), Li.T)
                idx = lmi.index
                grad[idx] -= np.trace(A, axis1=1, axis2=2)
                if order >= 2:
                    Af = A.reshape(len(idx), -1)
                    hess[np.ix_(idx, idx)] += Af @ Af.T
        for soc in self.socs:
            u, w = soc.parts(x)
            f = w**2 - np.sum(u**2, axis=1)
            if np.any(w <= 0) or np.any(f <= 0):
                return None
            val -= np.sum(np.log(f))
            if order >= 1:
                idx = soc.index
                df = 2 * w[:, None] * soc.r - 2 * np.einsum("sa,sab->sb", u, soc.E)
                gf = df / f[:, None]
                grad[idx] -= gf.sum(axis=0)
                if order >= 2:
                    rs = soc.r / np.sqrt(f)[:, None]
                    Es = (soc.E / np.sqrt(f)[:, None, None]).reshape(-1, len(idx))
                    hess[np.ix_(idx, idx)] += -2 * rs.T @ rs + 2 * Es.T @ Es + gf.T @ gf
        for lin in self.linear:
            slack = lin.h - lin.G @ x
            if np.any(slack <= 0):
                return None
            val -= np.sum(np.log(slack))
            if order >= 1:
                inv = 1.0 / slack
                grad += lin.G.T @ inv
                if order >= 2:
                    Gs = lin.G.multiply(inv[:, None]).tocsr()
                    hess += (Gs.T @ Gs).toarray()
        for ls in self.logsums:
            fx, q = ls.value(x)
            if fx is None:
                return None
            f = fx - ls.threshold
            if f <= 0:
                return None
            val -= np.log(f)
            if order >= 1:
                df = np.zeros(n)
                np.add.at(df, ls.index, ls.weight * ls.gain / q)
                np.add.at(df, ls.lin_index, ls.lin_coef)
                grad -= df / f
                if order >= 2:
                    d2 = np.zeros(n)
                    np.add.at(d2, ls.index, -ls.weight * ls.gain**2 / q**2)
                    hess[np.diag_indices(n)] -= d2 / f
                    hess += np.outer(df, df) / f**2
        if not np.isfinite(val):
            return None
        return val, grad, hess

    def violations(self, x) -> dict:
        """Worst violation per constraint family (positive means violated)."""
        out = {}
        for lmi in self.lmis:
            S = lmi.matrix(x)
            out[lmi.name] = max(out.get(lmi.name, -np.inf), -np.linalg.eigvalsh(0.5 * (S + S.T)).min())
        for soc in self.socs:
            u, w = soc.parts(x)
            out[soc.name] = max(out.get(soc.name, -np.inf), float(np.max(np.linalg.norm(u, axis=1) - w)))
        for lin in self.linear:
            out[lin.name] = max(out.get(lin.name, -np.inf), float(np.max(lin.G @ x - lin.h)))
        for ls in self.logsums:
            fx, _ = ls.value(x)
            v = np.inf if fx is None else ls.threshold - fx
            out[ls.name] = max(out.get(ls.name, -np.inf), v)
        return out


@dataclass(frozen=True)
class BarrierOptions:
    t0: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-9
    max_newton: int = 80
    max_outer: int = 60
    phase1_quad: float = 1e-6
    phase1_margin: float = 1e-3


@dataclass(eq=False)
class BarrierResult:
    x: np.ndarray
    objective: float
    gap: float
    newton_iterations: int
    phase1_iterations: int = 0




def _centering(prob: ConicProblem, x, t, opts: BarrierOptions, stop=None):
    """Damped Newton on ``t f0(x) + phi(x)``; returns (x, iterations)."""
    def merit(z, order):
        b = prob.barrier(z, order)
        if b is None:
            return None
        val = t * prob.objective(z) + b[0]
        if order == 0:
            return val, None, None
        g = t * prob.c + b[1]
        H = b[2]
        if prob.quad_diag is not None:
            g = g + t * prob.quad_diag * (z - prob.quad_ref)
            H = H + np.diag(t * prob.quad_diag)
        return val, g, H

    cur = merit(x, 2)
    if cur is None:
        raise NumericalBreakdown("centering started outside the barrier domain", x)
    it = 0
    for it in range(1, opts.max_newton + 1):
        val, g, H = cur
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
            raise NumericalBreakdown("non-finite Newton system", x)
        # Jacobi scaling: variables pinned at bounds give huge diagonal entries
        diag = np.diag(H).copy()
        diag[diag <= 0] = 1.0
        dj = 1.0 / np.sqrt(diag)
        Hs = H * np.outer(dj, dj)
        Hs = 0.5 * (Hs + Hs.T)
        reg = 0.0
        while True:
            try:
                cf = sla.cho_factor(Hs + reg * np.eye(len(Hs)))
                break
            except np.linalg.LinAlgError:
                reg = 1e-14 if reg == 0 else reg * 100
                if reg > 1e-2:
                    raise NumericalBreakdown("Newton matrix is not positive definite", x)
        dx = -dj * sla.cho_solve(cf, dj * g)
        dec = -float(g @ dx)
        if dec / 2 <= opts.newton_tol:
            break
        step = 1.0
        # inside the quadratic-convergence region of a self-concordant merit a
        # full step is safe; only the domain needs checking (this also avoids
        # comparing merit values that are dominated by roundoff of t f0)
        quadratic = dec < 0.09
        while True:
            trial = merit(x + step * dx, 0)
            if trial is not None and (quadratic or trial[0] <= val - 0.25 * step * dec):
                break
            step *= 0.5
            if step < 1e-14:
                # roundoff floor: t f0 dominates the merit late in the path
                if dec <= 1e-4:
                    return x, it
                raise SolverStall("line search failed to decrease the barrier merit")
        x = x + step * dx
        cur = merit(x, 2)
        if stop is not None and stop(x):
            break
    return x, it


def solve(prob: ConicProblem, x0=None, opts: BarrierOptions | None = None) -> BarrierResult:
    """Barrier method with an automatic Phase I when ``x0`` is not strictly feasible."""
    opts = opts or BarrierOptions()
    x = np.zeros(prob.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    phase1_its = 0
    if prob.barrier(x, 0) is None:
        x, phase1_its = phase_one(prob, x, opts)
    theta = max(prob.degree, 1.0)
    t = opts.t0
    total = 0
    for _ in range(opts.max_outer):
        x, its = _centering(prob, x, t, opts)
        total += its
        gap = theta / t
        if gap <= opts.gap_tol * max(1.0, abs(prob.objective(x))):
            break
        t *= opts.mu
    else:
        raise SolverStall(f"barrier did not reach gap tolerance (gap={theta / t:.3g})")
    return BarrierResult(x, prob.objective(x), theta / t, total, phase1_its)


def _augment(prob: ConicProblem) -> ConicProblem:
    """Phase-I problem: every constraint relaxed by a shared slack ``s`` (last var)."""
    n = prob.n
    s_idx = np.array([n])
    lmis = [
        LmiConstraint(
            np.concatenate([l.index, s_idx]),
            l.const,
            np.concatenate([l.coeffs, np.eye(l.size)[None]]),
            l.name,
        )
        for l in prob.lmis
    ]
    socs = [
        SocGroup(
            np.concatenate([g.index, s_idx]),
            np.concatenate([g.E, np.zeros((g.count, 2, 1))], axis=2),
            g.d,
            g.r0,
            np.concatenate([g.r, np.ones((g.count, 1))], axis=1),
            g.name,
        )
        for g in prob.socs
    ]
    linear = [
        LinearConstraint(
            sp.hstack([l.G, -np.ones((l.G.shape[0], 1))]).tocsr(), l.h, l.name
        )
        for l in prob.linear
    ]
    logsums = [
        LogSumConstraint(
            l.index, l.gain, l.weight, l.threshold,
            np.concatenate([l.lin_index, s_idx]), np.concatenate([l.lin_coef, [1.0]]), l.name,
        )
        for l in prob.logsums
    ]
    c = np.zeros(n + 1)
    c[n] = 1.0
    return ConicProblem(c, lmis, socs, linear, logsums)


def phase_one(prob: ConicProblem, x0, opts: BarrierOptions):
    """Find a strictly feasible point by minimizing the shared slack."""
    aug = _augment(prob)
    viol = prob.violations(x0)
    worst = max([v for v in viol.values() if np.isfinite(v)] + [0.0])
    if any(not np.isfinite(v) for v in viol.values()):
        raise NumericalBreakdown("Phase I start is outside the log-sum domain", x0)
    s0 = worst + max(1.0, abs(worst))
    z = np.concatenate([x0, [s0]])
    n = prob.n
    aug.quad_diag = np.concatenate([np.full(n, opts.phase1_quad), [0.0]])
    aug.quad_ref = z.copy()
    theta = max(aug.degree, 1.0)
    t = opts.t0
    total = 0
    # stop only with a real interior margin so the main barrier does not
    # start pinned against a constraint
    target = -opts.phase1_margin
    for _ in range(opts.max_outer):
        z, its = _centering(aug, z, t, opts, stop=lambda zz: zz[n] < target)
        total += its
        if z[n] < target:
            return z[:n], total
        if theta / t <= opts.gap_tol:
            break
        t *= opts.mu
    if z[n] < 0:
        return z[:n], total
    viol = prob.violations(z[:n])
    bad = [k for k, v in viol.items() if v > 0]
    raise PhaseIInfeasible(
        f"no strictly feasible point (min slack {z[n]:.3g})", bad, stage="phase1", slack=float(z[n])
    )
