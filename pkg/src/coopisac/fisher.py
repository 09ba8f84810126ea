"""Fisher information for cooperative delay/Doppler sensing.

Parameter orderings used throughout:

* link index ``r = p * Q + q`` (0-based);
* ``eta = [tau (PQ), fd (PQ), Re alpha (PQ), Im alpha (PQ)]``;
* ``xi = [x, y, vx, vy, Re alpha (PQ), Im alpha (PQ)]``;
* ``J_s`` rows follow ``[tau (PQ); fd (PQ)]``;
* local reports / ``Sigma_zeta`` are link-major: ``(tau_r, fd_r)`` pairs, so
  ``Sigma_zeta`` is block diagonal with 2x2 blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coopisac.errors import RankDeficientFusion, SingularFim, UnobservableLink
from coopisac.grid import AllocationPlan, vec
from coopisac.scenario import (
    SPEED_OF_LIGHT,
    OfdmParams,
    Scenario,
    TargetState,
    link_geometry,
    unit_vectors,
)
from coopisac.signal import delay_steering, doppler_steering

COND_LIMIT = 1e12


# ---------------------------------------------------------------------------
# per-link derivative vectors


@dataclass(frozen=True)
class LinkParams:
    tau_s: float
    fd_hz: float
    alpha: complex

    @property
    def eta(self) -> np.ndarray:
        return np.array([self.tau_s, self.fd_hz, self.alpha.real, self.alpha.imag])


def derivative_vectors(ofdm: OfdmParams, link: LinkParams) -> np.ndarray:
    """Derivatives of ``g = alpha (psi* ⊗ phi)`` w.r.t. (tau, fd, Re alpha, Im alpha).

    Returns a (4, MN) complex array in column-major vec order.
    """
    phi = delay_steering(ofdm, link.tau_s)
    psi = doppler_steering(ofdm, link.fd_hz)
    eps_n = np.arange(ofdm.num_subcarriers)
    eps_m = np.arange(ofdm.num_symbols)
    dphi = -2j * np.pi * ofdm.subcarrier_spacing_hz * eps_n * phi
    dpsi = -2j * np.pi * ofdm.symbol_duration_s * eps_m * psi
    base = np.kron(np.conj(psi), phi)
    return np.stack(
        [
            link.alpha * np.kron(np.conj(psi), dphi),
            link.alpha * np.kron(np.conj(dpsi), phi),
            base,
            1j * base,
        ]
    )


def fim_coefficients(ofdm: OfdmParams, link: LinkParams, noise_power_w: float) -> np.ndarray:
    """Per-RE contribution to the local 4x4 FIM: ``(2/s2) Re{conj(g_i) g_j}``.

    Shape (MN, 4, 4); the local FIM is ``tensordot(p_eff, coeffs, 1)``.
    """
    g = derivative_vectors(ofdm, link).T
    return (2.0 / noise_power_w) * np.real(np.conj(g)[:, :, None] * g[:, None, :])


def link_params(scenario: Scenario, target: TargetState | None = None) -> list[LinkParams]:
    geo = link_geometry(scenario, target)
    P, Q = scenario.num_tx, scenario.num_rx
    return [
        LinkParams(geo.tau_s[p, q], geo.fd_hz[p, q], complex(scenario.reflections[p, q]))
        for p in range(P)
        for q in range(Q)
    ]


def link_fims(scenario: Scenario, plan: AllocationPlan, target=None) -> np.ndarray:
    """Local 4x4 FIMs of every link, shape (PQ, 4, 4)."""
    Q = scenario.num_rx
    sigma2 = scenario.sensing_noise.noise_power_w
    out = []
    for r, link in enumerate(link_params(scenario, target)):
        p_eff = vec(plan.effective_sensing_power(r // Q))
        g = derivative_vectors(scenario.ofdm, link)
        # (2/s2) Re{ p^T (conj(g_i) ⊙ g_j) }
        out.append((2.0 / sigma2) * np.real((np.conj(g) * p_eff) @ g.T))
    return np.array(out)


# ---------------------------------------------------------------------------
# global FIM over eta


@dataclass(frozen=True, eq=False)
class EtaFim:
    matrix: np.ndarray  # (4PQ, 4PQ)
    link_blocks: np.ndarray  # (PQ, 4, 4)

    @property
    def num_links(self) -> int:
        return self.link_blocks.shape[0]

    def block(self, i: int, j: int) -> np.ndarray:
        """``F_{i,j}`` (PQ x PQ), i, j in 0..3 for (tau, fd, Re, Im)."""
        L = self.num_links
        return self.matrix[i * L:(i + 1) * L, j * L:(j + 1) * L]


def assemble_eta(blocks: np.ndarray) -> np.ndarray:
    L = blocks.shape[0]
    F = np.zeros((4 * L, 4 * L))
    idx = np.arange(L)
    for i in range(4):
        for j in range(4):
            F[i * L + idx, j * L + idx] = blocks[:, i, j]
    return F


def fim_eta(scenario: Scenario, plan: AllocationPlan, target=None) -> EtaFim:
    blocks = link_fims(scenario, plan, target)
    return EtaFim(assemble_eta(blocks), blocks)


# ---------------------------------------------------------------------------
# geometry Jacobians


@dataclass(frozen=True, eq=False)
class Jacobians:
    J_u: np.ndarray  # d tau / d u            (PQ, 2)
    J_v: np.ndarray  # d fd / d v             (PQ, 2)
    J_uv: np.ndarray  # d fd / d u            (PQ, 2)
    J_s: np.ndarray  # d [tau; fd] / d s      (2PQ, 4)

    @property
    def link_major(self) -> np.ndarray:
        """``J_s`` with rows reordered to (tau_r, fd_r) pairs."""
        return to_link_major_rows(self.J_s)


def to_link_major_rows(J: np.ndarray) -> np.ndarray:
    L = J.shape[0] // 2
    out = np.empty_like(J)
    out[0::2] = J[:L]
    out[1::2] = J[L:]
    return out


def jacobians_from_positions(tx, rx, u, v, wavelength) -> Jacobians:
    r_tx, d_tx = unit_vectors(tx, u)
    r_rx, d_rx = unit_vectors(rx, u)
    v = np.asarray(v, dtype=float)
    P, Q = len(tx), len(rx)
    eye = np.eye(2)
    proj_tx = (eye[None] - r_tx[:, :, None] * r_tx[:, None, :]) / d_tx[:, None, None]
    proj_rx = (eye[None] - r_rx[:, :, None] * r_rx[:, None, :]) / d_rx[:, None, None]
    r_pq = (r_tx[:, None, :] + r_rx[None, :, :]).reshape(P * Q, 2)
    hat = ((proj_tx @ v)[:, None, :] + (proj_rx @ v)[None, :, :]).reshape(P * Q, 2) / wavelength
    J_u = r_pq / SPEED_OF_LIGHT
    J_v = r_pq / wavelength
    J_s = np.block([[J_u, np.zeros_like(J_u)], [hat, J_v]])
    return Jacobians(J_u, J_v, hat, J_s)


def jacobians(scenario: Scenario, target: TargetState | None = None) -> Jacobians:
    target = scenario.target if target is None else target
    return jacobians_from_positions(
        scenario.deployment.tx_positions,
        scenario.deployment.rx_positions,
        target.position_m,
        target.velocity_mps,
        scenario.ofdm.wavelength_m,
    )


def full_jacobian(jac: Jacobians) -> np.ndarray:
    """``J = d eta / d xi = blkdiag(J_s, I_2PQ)``."""
    L = jac.J_u.shape[0]
    J = np.zeros((4 * L, 4 + 2 * L))
    J[: 2 * L, :4] = jac.J_s
    J[2 * L:, 4:] = np.eye(2 * L)
    return J


# ---------------------------------------------------------------------------
# equilibrated inversion helpers


def _equilibrate(F: np.ndarray):
    d = np.sqrt(np.abs(np.diag(F)))
    d[d == 0] = 1.0
    return F / np.outer(d, d), d


def checked_inverse(F: np.ndarray, what: str = "FIM") -> np.ndarray:
    """Inverse of a symmetric PSD matrix after diagonal equilibration.

    Raises :class:`SingularFim` when the equilibrated condition number
    exceeds ``COND_LIMIT``; the exception carries a basis (in the original
    coordinates) of the numerically unobservable subspace.
    """
    F = 0.5 * (F + F.T)
    if np.any(np.diag(F) <= 0):
        null = np.eye(len(F))[:, np.diag(F) <= 0]
        raise SingularFim(f"{what} has zero-information directions", float("inf"), null)
    Fn, d = _equilibrate(F)
    w, V = np.linalg.eigh(Fn)
    cond = w[-1] / w[0] if w[0] > 0 else float("inf")
    if not cond < COND_LIMIT:
        null = V[:, w < w[-1] / COND_LIMIT] / d[:, None]
        raise SingularFim(f"{what} is singular", cond, null)
    return (V / w) @ V.T / np.outer(d, d)


def symmetric_psd_ok(F: np.ndarray, rel_tol: float = 1e-9) -> bool:
    scale = max(np.linalg.norm(F), 1e-300)
    if np.linalg.norm(F - F.T) > rel_tol * scale:
        return False
    return np.linalg.eigvalsh(0.5 * (F + F.T)).min() >= -rel_tol * scale


# ---------------------------------------------------------------------------
# SLF bound


@dataclass(frozen=True, eq=False)
class FisherReport:
    F_eta: np.ndarray
    jac: np.ndarray
    F_xi: np.ndarray
    F_ss: np.ndarray
    F_sb: np.ndarray
    F_bb: np.ndarray
    F_eqv: np.ndarray
    crb_matrix: np.ndarray
    crb_weighted: float
    weight_matrix: np.ndarray
    active_links: np.ndarray  # link indices with nonzero sensing power

    @property
    def position_bound(self) -> float:
        """``tr`` of the 2x2 position block of ``F_eqv^{-1}`` (m^2)."""
        return float(np.trace(self.crb_matrix[:2, :2]))

    @property
    def velocity_bound(self) -> float:
        return float(np.trace(self.crb_matrix[2:, 2:]))

    def write_csv(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name in ("F_eta", "jac", "F_xi", "F_eqv", "crb_matrix", "weight_matrix"):
            path = directory / f"{name}.csv"
            np.savetxt(path, getattr(self, name), delimiter=",", fmt="%.17g")
            written.append(path)
        summary = directory / "fisher_report.csv"
        summary.write_text(
            "metric,value\n"
            f"crb_weighted,{self.crb_weighted!r}\n"
            f"position_bound_m2,{self.position_bound!r}\n"
            f"velocity_bound_m2ps2,{self.velocity_bound!r}\n"
        )
        written.append(summary)
        return written

    def summary_line(self) -> str:
        return (
            f"crb_weighted={self.crb_weighted:.6e} "
            f"rmse_pos={np.sqrt(self.position_bound):.6e} m "
            f"rmse_vel={np.sqrt(self.velocity_bound):.6e} m/s"
        )


def _beta_index(L: int, links) -> np.ndarray:
    links = np.asarray(links, dtype=int)
    return np.concatenate([links, L + links])


def schur_eliminate_beta(F_ss, F_sb, F_bb, L: int) -> np.ndarray:
    """``F_ss - F_sb F_bb^{-1} F_sb^T`` inverting ``F_bb`` link by link."""
    out = F_ss.copy()
    for r in range(L):
        idx = [r, L + r]
        C = F_bb[np.ix_(idx, idx)]
        B = F_sb[:, idx]
        out -= B @ np.linalg.solve(C, B.T)
    return 0.5 * (out + out.T)


def slf_crb(scenario: Scenario, plan: AllocationPlan, target=None) -> FisherReport:
    """Weighted SLF CRB ``tr(W F_eqv^{-1})`` with the reflections as nuisance."""
    eta = fim_eta(scenario, plan, target)
    jac = jacobians(scenario, target)
    J = full_jacobian(jac)
    F_xi = J.T @ eta.matrix @ J
    F_xi = 0.5 * (F_xi + F_xi.T)
    L = eta.num_links
    # links whose Tx carries no sensing power are decoupled and carry no information
    active = np.array([r for r in range(L) if np.any(eta.link_blocks[r, 2:, 2:] != 0)], dtype=int)
    if len(active) == 0:
        raise SingularFim("no sensing power on any link", float("inf"), np.eye(4))
    F_ss = F_xi[:4, :4]
    F_sb_full = F_xi[:4, 4:]
    F_bb_full = F_xi[4:, 4:]
    keep = _beta_index(L, active)
    F_sb = F_sb_full[:, keep]
    F_bb = F_bb_full[np.ix_(keep, keep)]
    F_eqv = schur_eliminate_beta(F_ss, F_sb, F_bb, len(active))
    crb = checked_inverse(F_eqv, "equivalent FIM")
    W = scenario.weight_matrix()
    return FisherReport(
        F_eta=eta.matrix,
        jac=J,
        F_xi=F_xi,
        F_ss=F_ss,
        F_sb=F_sb_full,
        F_bb=F_bb_full,
        F_eqv=F_eqv,
        crb_matrix=crb,
        crb_weighted=float(np.trace(W @ crb)),
        weight_matrix=W,
        active_links=active,
    )


def weighted_crb(scenario: Scenario, plan: AllocationPlan, target=None) -> float:
    return slf_crb(scenario, plan, target).crb_weighted


# ---------------------------------------------------------------------------
# local (per-link) bounds


@dataclass(frozen=True, eq=False)
class LocalFim:
    F4: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sigma_ml: np.ndarray


def local_fim_from_block(F4: np.ndarray, where: str = "link") -> LocalFim:
    A, B, C = F4[:2, :2], F4[:2, 2:], F4[2:, 2:]
    if not np.any(C):
        raise UnobservableLink(f"{where}: no sensing power")
    if np.linalg.cond(C) > COND_LIMIT:
        raise UnobservableLink(f"{where}: reflection block singular")
    G = A - B @ np.linalg.solve(C, B.T)
    G = 0.5 * (G + G.T)
    try:
        sigma = checked_inverse(G, f"{where} delay/Doppler information")
    except SingularFim as exc:
        raise UnobservableLink(str(exc)) from exc
    return LocalFim(F4, A, B, C, 0.5 * (sigma + sigma.T))


def local_fim(scenario: Scenario, plan: AllocationPlan, p: int, q: int, target=None) -> LocalFim:
    blocks = link_fims(scenario, plan, target)
    return local_fim_from_block(blocks[p * scenario.num_rx + q], f"link ({p},{q})")


def sigma_ml_blocks(scenario: Scenario, plan: AllocationPlan, target=None) -> np.ndarray:
    """Equivalent local CRBs of (tau, fd) for every link, shape (PQ, 2, 2)."""
    blocks = link_fims(scenario, plan, target)
    Q = scenario.num_rx
    return np.array(
        [
            local_fim_from_block(b, f"link ({r // Q},{r % Q})").sigma_ml
            for r, b in enumerate(blocks)
        ]
    )


def block_diag_2x2(blocks: np.ndarray) -> np.ndarray:
    L = len(blocks)
    out = np.zeros((2 * L, 2 * L))
    for r, b in enumerate(blocks):
        out[2 * r:2 * r + 2, 2 * r:2 * r + 2] = b
    return out


def diag_blocks_2x2(matrix: np.ndarray) -> np.ndarray:
    L = matrix.shape[0] // 2
    return np.array([matrix[2 * r:2 * r + 2, 2 * r:2 * r + 2] for r in range(L)])


# ---------------------------------------------------------------------------
# PLF two-stage bound


class TsMode(str, enum.Enum):
    ML = "ml"
    FFT = "fft"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class TsCrbReport:
    sigma_zeta: np.ndarray
    fusion_weight: np.ndarray
    sigma_s: np.ndarray
    ts_crb: float
    mode: TsMode

    @property
    def position_bound(self) -> float:
        return float(np.trace(self.sigma_s[:2, :2]))

    @property
    def velocity_bound(self) -> float:
        return float(np.trace(self.sigma_s[2:, 2:]))

    def write_csv(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for name in ("sigma_zeta", "fusion_weight", "sigma_s"):
            path = directory / f"{name}.csv"
            np.savetxt(path, getattr(self, name), delimiter=",", fmt="%.17g")
            out.append(path)
        path = directory / "tscrb_report.csv"
        path.write_text(
            f"metric,value\nts_crb,{self.ts_crb!r}\nmode,{self.mode.value}\n"
            f"position_bound_m2,{self.position_bound!r}\nvelocity_bound_m2ps2,{self.velocity_bound!r}\n"
        )
        out.append(path)
        return out


def range_domain_weight(ofdm: OfdmParams, num_links: int) -> np.ndarray:
    """Unweighted (LS) fusion weight: identity on bistatic range / range-rate.

    Reports are (tau, fd); in range units they read (c0 tau, lambda fd), so
    the identity there is ``diag(c0^2, lambda^2)`` per link.
    """
    per_link = np.array([SPEED_OF_LIGHT**2, ofdm.wavelength_m**2])
    return np.diag(np.tile(per_link, num_links))


def resolve_fusion_weight(w_wls, sigma_zeta: np.ndarray, ofdm: OfdmParams) -> np.ndarray:
    L = sigma_zeta.shape[0] // 2
    if isinstance(w_wls, str):
        key = w_wls.lower()
        if key in ("inverse", "inversesigma", "wls"):
            return np.linalg.inv(sigma_zeta)
        if key in ("identity", "ls"):
            return range_domain_weight(ofdm, L)
        raise ValueError(f"unknown fusion weight '{w_wls}'")
    return np.asarray(w_wls, dtype=float)


def fusion_covariance(J: np.ndarray, sigma_zeta: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """First-order WLS error covariance (the sandwich form)."""
    if np.linalg.matrix_rank(J) < J.shape[1]:
        raise RankDeficientFusion(f"Jacobian rank {np.linalg.matrix_rank(J)} < {J.shape[1]}")
    info = J.T @ weight @ J
    try:
        G = np.linalg.solve(info, J.T @ weight)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientFusion(str(exc)) from exc
    S = G @ sigma_zeta @ G.T
    return 0.5 * (S + S.T)


def ts_crb(
    scenario: Scenario,
    sigma_zeta: np.ndarray,
    w_wls="inverse",
    target=None,
    mode: TsMode = TsMode.CUSTOM,
) -> TsCrbReport:
    """Two-stage bound ``tr(W Sigma_s)`` of geometric fusion of local reports.

    ``sigma_zeta`` is link-major (2PQ x 2PQ) or a stack of (PQ, 2, 2) blocks.
    ``w_wls`` is ``"inverse"`` (covariance-aware WLS), ``"identity"`` (LS in
    range units) or an explicit 2PQ x 2PQ matrix.
    """
    sigma_zeta = np.asarray(sigma_zeta, dtype=float)
    if sigma_zeta.ndim == 3:
        sigma_zeta = block_diag_2x2(sigma_zeta)
    J = jacobians(scenario, target).link_major
    if J.shape[0] < 4 or np.linalg.matrix_rank(J) < 4:
        raise RankDeficientFusion("fewer than 4 independent measurement rows")
    weight = resolve_fusion_weight(w_wls, sigma_zeta, scenario.ofdm)
    if isinstance(w_wls, str) and w_wls.lower() in ("inverse", "inversesigma", "wls"):
        info = J.T @ weight @ J
        sigma_s = checked_inverse(info, "PLF information")
    else:
        sigma_s = fusion_covariance(J, sigma_zeta, weight)
    W = scenario.weight_matrix()
    return TsCrbReport(sigma_zeta, weight, sigma_s, float(np.trace(W @ sigma_s)), TsMode(mode))


def plf_information(scenario: Scenario, plan: AllocationPlan, target=None) -> np.ndarray:
    """``J_s^T G_zeta J_s`` with ``G_zeta`` the nuisance-eliminated link FIMs."""
    blocks = link_fims(scenario, plan, target)
    J = jacobians(scenario, target).link_major
    G = np.zeros((len(J), len(J)))
    for r, b in enumerate(blocks):
        if np.any(b[2:, 2:]):
            lf = b[:2, :2] - b[:2, 2:] @ np.linalg.solve(b[2:, 2:], b[2:, :2])
            G[2 * r:2 * r + 2, 2 * r:2 * r + 2] = lf
    return J.T @ G @ J


@dataclass(frozen=True)
class GapReport:
    crb_slf: float
    ts_crb: float
    ordered: bool
    dominated: bool  # Sigma_zeta ⪰ Sigma_ML blockwise
    relative_gap: float


def psd_dominates(sigma_zeta: np.ndarray, sigma_ml: np.ndarray, rel_tol: float = 1e-9) -> bool:
    """Blockwise ``sigma_zeta ⪰ sigma_ml`` (both (PQ, 2, 2) or link-major)."""
    a = sigma_zeta if sigma_zeta.ndim == 3 else diag_blocks_2x2(sigma_zeta)
    b = sigma_ml if sigma_ml.ndim == 3 else diag_blocks_2x2(sigma_ml)
    for x, y in zip(a, b):
        _, d = _equilibrate(y)
        diff = (x - y) / np.outer(d, d)
        if np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() < -rel_tol:
            return False
    return True


def gap_check(
    scenario: Scenario,
    plan: AllocationPlan,
    sigma_zeta,
    target=None,
    w_wls="inverse",
    rel_tol: float = 1e-8,
) -> GapReport:
    """Compare the SLF CRB with the two-stage bound for ``sigma_zeta``.

    ``ordered`` is False when ``CRB_SLF > TS-CRB (1 + rel_tol)`` although
    ``sigma_zeta`` dominates the ML blocks, which can only be a numerical
    conditioning problem.
    """
    sigma_zeta = np.asarray(sigma_zeta, dtype=float)
    slf = slf_crb(scenario, plan, target).crb_weighted
    ts = ts_crb(scenario, sigma_zeta, w_wls, target).ts_crb
    dominated = psd_dominates(sigma_zeta, sigma_ml_blocks(scenario, plan, target))
    ordered = slf <= ts * (1 + rel_tol) or not dominated
    return GapReport(slf, ts, ordered, dominated, (ts - slf) / slf)
