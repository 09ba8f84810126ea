"""First-order reference solver for small SDPs, used to cross-check the barrier method.

Solves ``min c^T x  s.t.  F0 + sum_i x_i F_i ⪰ 0`` with ADMM on the split
``S = F0 + A(x)``, ``S ⪰ 0``: a least-squares step in ``x``, a projection of
``S`` onto the PSD cone and a scaled dual update.  It shares no code with the
interior-point solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopisac.errors import NoConvergence


@dataclass(frozen=True)
class AdmmResult:
    x: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float


def project_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.maximum(w, 0.0)) @ V.T


def admm_sdp(F0, Fs, c, rho: float = 1.0, tol: float = 1e-10, max_iter: int = 200_000) -> AdmmResult:
    """ADMM for the LMI-form SDP; ``Fs`` has shape (n, k, k)."""
    F0 = np.asarray(F0, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    c = np.asarray(c, dtype=float)
    n, k, _ = Fs.shape
    A = Fs.reshape(n, k * k).T  # vec(A(x)) = A @ x
    gram = A.T @ A
    chol = np.linalg.cholesky(gram)
    f0 = F0.ravel()
    x = np.zeros(n)
    S = project_psd(F0)
    U = np.zeros(k * k)
    scale = max(1.0, np.linalg.norm(f0))
    for it in range(1, max_iter + 1):
        rhs = -c / rho - A.T @ (f0 - S.ravel() + U)
        x = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        Ax = A @ x
        S_old = S
        S = project_psd((f0 + Ax + U).reshape(k, k))
        r = f0 + Ax - S.ravel()
        U = U + r
        rp = np.linalg.norm(r)
        rd = rho * np.linalg.norm(A.T @ (S - S_old).ravel())
        if rp <= tol * scale and rd <= tol * max(1.0, np.linalg.norm(c)):
            return AdmmResult(x, float(c @ x), it, rp, rd)
        # residual balancing keeps the two residuals within a factor of 10
        if it % 50 == 0:
            if rp > 10 * rd:
                rho *= 2.0
                U /= 2.0
            elif rd > 10 * rp:
                rho /= 2.0
                U *= 2.0
    raise NoConvergence(f"ADMM did not reach tol={tol} in {max_iter} iterations")


def random_sdp(k: int, n: int, seed: int = 0):
    """Random LMI-form SDP with a strictly feasible primal and dual.

    ``F0 ≻ 0`` makes ``x = 0`` strictly feasible; ``c_i = <F_i, Z0>`` with
    ``Z0 ≻ 0`` makes the dual strictly feasible, so the optimum is attained.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((k, k))
    F0 = G @ G.T / k + np.eye(k)
    Fs = rng.standard_normal((n, k, k))
    Fs = 0.5 * (Fs + np.swapaxes(Fs, 1, 2))
    H = rng.standard_normal((k, k))
    Z0 = H @ H.T / k + 0.1 * np.eye(k)
    c = np.einsum("nij,ij->n", Fs, Z0)
    return F0, Fs, c
