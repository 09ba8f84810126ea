"""Delay/Doppler extraction, geometric fusion and the SLF ML estimator."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from coopisac import fisher
from coopisac.errors import DegenerateGeometry, EmptyLink, NoConvergence, RankDeficientFusion
from coopisac.grid import AllocationPlan
from coopisac.scenario import (
    SPEED_OF_LIGHT,
    Scenario,
    TargetState,
    geometry_from_positions,
)
from coopisac.signal import ObservationSet, PilotSet


class ReportMode(str, enum.Enum):
    FFT = "fft"
    ML = "ml"


class WeightMode(str, enum.Enum):
    LS = "ls"
    WLS = "wls"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LocalReport:
    link: tuple[int, int]
    tau_s: float
    fd_hz: float
    alpha: complex
    mode: ReportMode
    grid_size: tuple[int, int] | None = None
    refine: bool = False
    cost_initial: float | None = None
    cost_final: float | None = None

    @property
    def zeta(self) -> np.ndarray:
        return np.array([self.tau_s, self.fd_hz])


@dataclass(frozen=True, eq=False)
class FusionResult:
    s_hat: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    weight_mode: WeightMode

    @property
    def target(self) -> TargetState:
        return TargetState.from_state(self.s_hat)


@dataclass(frozen=True, eq=False)
class SlfEstimate:
    s_hat: np.ndarray
    alpha_hats: np.ndarray
    coarse_s: np.ndarray
    cost_trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def target(self) -> TargetState:
        return TargetState.from_state(self.s_hat)


# ---------------------------------------------------------------------------
# per-link matched data


class LinkData:
    """Rx-q data restricted to Tx-p sensing REs, matched to the pilots.

    ``z = conj(X_{p,0}) ⊙ Y_q`` so that the correlation with a hypothesis
    ``(tau, fd)`` is ``a(tau)^T z b(fd)`` with ``a_n = exp(+j2 pi n df tau)``
    and ``b_m = exp(-j2 pi m fd Ts)``.
    """

    def __init__(self, obs: ObservationSet, plan: AllocationPlan, pilots: PilotSet, scenario, p, q):
        x = pilots.sensing_waveform(plan)[p]
        self.energy = float(np.sum(np.abs(x) ** 2))
        if self.energy <= 0:
            raise EmptyLink(f"Tx {p} has no sensing REs")
        self.z = np.conj(x) * obs.grids[q]
        self.y_energy = float(np.sum(np.abs(obs.grids[q] * (plan.sensing[p] > 0)) ** 2))
        self.ofdm = scenario.ofdm
        self.n = np.arange(self.ofdm.num_subcarriers)
        self.m = np.arange(self.ofdm.num_symbols)
        self.df = self.ofdm.subcarrier_spacing_hz
        self.ts = self.ofdm.symbol_duration_s

    def correlation(self, tau, fd, grad: bool = False):
        a = np.exp(2j * np.pi * self.n * self.df * tau)
        b = np.exp(-2j * np.pi * self.m * self.ts * fd)
        zb = self.z @ b
        c = a @ zb
        if not grad:
            return c
        dc_tau = (2j * np.pi * self.df * self.n * a) @ zb
        dc_fd = a @ (self.z @ (-2j * np.pi * self.ts * self.m * b))
        return c, np.array([dc_tau, dc_fd])

    def concentrated_cost(self, tau, fd) -> float:
        """``||y||^2 - |b^H y|^2 / ||b||^2`` on this link's REs."""
        return self.y_energy - abs(self.correlation(tau, fd)) ** 2 / self.energy

    def alpha_hat(self, tau, fd) -> complex:
        return complex(self.correlation(tau, fd) / self.energy)

    def periodogram(self, fft_size) -> np.ndarray:
        """``|c|^2`` on the (Nf, Mf) grid ``tau_k = k/(Nf df)``, ``fd_l = l/(Mf Ts)``."""
        nf, mf = fft_size
        spec = np.fft.ifft(self.z, n=nf, axis=0) * nf
        spec = np.fft.fft(spec, n=mf, axis=1)
        return np.abs(spec) ** 2


def _parabolic_offset(left, centre, right) -> float:
    denom = left - 2 * centre + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def wrap_doppler(fd, ts):
    half = 0.5 / ts
    return (np.asarray(fd) + half) % (2 * half) - half


def search_window(scenario: Scenario) -> tuple[float, float]:
    """Physical prior on (tau, |fd|) used to resolve grating-lobe ambiguities.

    Interleaved patterns repeat the pilot grid with a stride, so the matched
    periodogram has equal-height copies of the peak.  Delays are bounded by
    four times the largest BS spacing and Doppler by the ICI-free limit of a
    tenth of the subcarrier spacing.
    """
    ofdm = scenario.ofdm
    pts = np.vstack([scenario.deployment.tx_positions, scenario.deployment.rx_positions])
    span = max(float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))), 1.0)
    tau_max = min(1.0 / ofdm.subcarrier_spacing_hz, 4 * span / SPEED_OF_LIGHT)
    fd_max = min(0.5 / ofdm.symbol_duration_s, 0.1 * ofdm.subcarrier_spacing_hz)
    return tau_max, fd_max


def plausible_state(scenario: Scenario, s) -> bool:
    """Whether ``s`` lies inside the physical prior of :func:`search_window`.

    Position within twice the largest BS spacing of the BS centroid, speed
    below the Doppler limit translated to m/s.
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        return False
    pts = np.vstack([scenario.deployment.tx_positions, scenario.deployment.rx_positions])
    span = max(float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1))), 1.0)
    _, fd_max = search_window(scenario)
    v_max = fd_max * scenario.ofdm.wavelength_m
    return bool(np.linalg.norm(s[:2] - pts.mean(axis=0)) <= 2 * span and np.linalg.norm(s[2:]) <= 2 * v_max)


def _fallback_state(scenario: Scenario, *candidates) -> np.ndarray:
    for c in candidates:
        if c is not None and plausible_state(scenario, c):
            return np.asarray(c, dtype=float)
    pts = np.vstack([scenario.deployment.tx_positions, scenario.deployment.rx_positions])
    return np.concatenate([pts.mean(axis=0) + 1e-3, np.zeros(2)])


def plf_local_fft(
    obs: ObservationSet,
    plan: AllocationPlan,
    pilots: PilotSet,
    scenario: Scenario,
    p: int,
    q: int,
    fft_size=None,
    refine: bool = False,
    window=None,
) -> LocalReport:
    """Peak of the zero-padded 2-D matched periodogram, optionally interpolated.

    ``window = (tau_max, fd_max)`` restricts the peak search; ``None`` uses
    :func:`search_window` and ``False`` searches the whole unambiguous grid.
    """
    N, M = scenario.ofdm.shape
    nf, mf = (N, M) if fft_size is None else fft_size
    if nf < N or mf < M:
        raise ValueError("FFT size must be at least the grid size")
    data = LinkData(obs, plan, pilots, scenario, p, q)
    power = data.periodogram((nf, mf))
    if window is None:
        window = search_window(scenario)
    search = power
    if window is not False:
        tau_max, fd_max = window
        taus = np.arange(nf) / (nf * data.df)
        fds = wrap_doppler(np.arange(mf) / (mf * data.ts), data.ts)
        inside = (taus <= tau_max)[:, None] & (np.abs(fds) <= fd_max)[None, :]
        if inside.any():
            search = np.where(inside, power, -1.0)
    k, l = np.unravel_index(int(np.argmax(search)), power.shape)
    dk = dl = 0.0
    if refine:
        dk = _parabolic_offset(power[(k - 1) % nf, l], power[k, l], power[(k + 1) % nf, l])
        dl = _parabolic_offset(power[k, (l - 1) % mf], power[k, l], power[k, (l + 1) % mf])
    df, ts = data.df, data.ts
    tau = ((k + dk) % nf) / (nf * df)
    fd = float(wrap_doppler((l + dl) / (mf * ts), ts))
    return LocalReport(
        (p, q), float(tau), fd, data.alpha_hat(tau, fd), ReportMode.FFT, (nf, mf), refine
    )


def plf_local_ml(
    obs: ObservationSet,
    plan: AllocationPlan,
    pilots: PilotSet,
    scenario: Scenario,
    p: int,
    q: int,
    init: LocalReport,
    max_iter: int = 200,
) -> LocalReport:
    """Continuous (tau, fd) ML by quasi-Newton descent on the concentrated cost."""
    data = LinkData(obs, plan, pilots, scenario, p, q)
    N, M = scenario.ofdm.shape
    # work in units of resolution bins
    scale = np.array([1.0 / (N * data.df), 1.0 / (M * data.ts)])
    norm = data.energy * max(data.y_energy, 1e-300)

    def fun(x):
        tau, fd = x * scale
        c, dc = data.correlation(tau, fd, grad=True)
        val = -abs(c) ** 2 / norm
        g = -2 * np.real(np.conj(c) * dc) / norm * scale
        return val, g

    x0 = init.zeta / scale
    res = optimize.minimize(
        fun, x0, jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": max_iter}
    )
    x = res.x if res.fun <= fun(x0)[0] else x0
    x = _newton_polish(fun, x)
    tau, fd = x * scale
    tau = tau % (1.0 / data.df)
    fd = float(wrap_doppler(fd, data.ts))
    report = LocalReport(
        (p, q),
        float(tau),
        fd,
        data.alpha_hat(tau, fd),
        ReportMode.ML,
        None,
        True,
        data.concentrated_cost(*init.zeta),
        data.concentrated_cost(tau, fd),
    )
    if not res.success and res.nit >= max_iter:
        raise NoConvergence(f"link ({p},{q}) ML did not converge", best=report)
    return report


def _newton_polish(fun, x, steps: int = 3, h: float = 1e-5):
    """A few Newton steps with a central-difference Hessian of the gradient."""
    for _ in range(steps):
        f0, g0 = fun(x)
        H = np.empty((len(x), len(x)))
        for i in range(len(x)):
            e = np.zeros(len(x))
            e[i] = h
            H[:, i] = (fun(x + e)[1] - fun(x - e)[1]) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            if np.linalg.eigvalsh(H).min() <= 0:
                break
            step = np.linalg.solve(H, g0)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 0.5:
            break
        f1, g1 = fun(x - step)
        # near a zero-residual optimum cost differences drop below roundoff,
        # so a shrinking gradient also counts as progress
        if np.isfinite(f1) and (f1 <= f0 or np.linalg.norm(g1) < np.linalg.norm(g0)):
            x = x - step
        else:
            break
    return x


# ---------------------------------------------------------------------------
# geometric fusion


def measurement_model(scenario: Scenario, s) -> np.ndarray:
    """Link-major ``zeta(s)`` = (tau_r, fd_r) pairs."""
    geo = geometry_from_positions(
        scenario.deployment.tx_positions,
        scenario.deployment.rx_positions,
        s[:2],
        s[2:4],
        scenario.ofdm.wavelength_m,
    )
    return np.stack([geo.tau_s.ravel(), geo.fd_hz.ravel()], axis=1).ravel()


def measurement_jacobian(scenario: Scenario, s) -> np.ndarray:
    jac = fisher.jacobians_from_positions(
        scenario.deployment.tx_positions,
        scenario.deployment.rx_positions,
        s[:2],
        s[2:4],
        scenario.ofdm.wavelength_m,
    )
    return jac.link_major


def _stack_reports(reports, scenario) -> np.ndarray:
    Q = scenario.num_rx
    zeta = np.full(2 * scenario.num_links, np.nan)
    for rep in reports:
        r = rep.link[0] * Q + rep.link[1]
        zeta[2 * r:2 * r + 2] = rep.zeta
    return zeta


def fusion_weight(weight_mode, scenario: Scenario, sigma_zeta=None) -> np.ndarray:
    mode = WeightMode(weight_mode)
    L = scenario.num_links
    if mode is WeightMode.LS:
        return fisher.range_domain_weight(scenario.ofdm, L)
    if sigma_zeta is None:
        raise ValueError(f"{mode.value} fusion needs sigma_zeta")
    sigma_zeta = np.asarray(sigma_zeta, dtype=float)
    if sigma_zeta.ndim == 3:
        sigma_zeta = fisher.block_diag_2x2(sigma_zeta)
    if mode is WeightMode.WLS:
        return np.linalg.inv(sigma_zeta)
    return sigma_zeta  # CUSTOM: the matrix given is the weight itself


def fuse_vector(
    zeta_hat: np.ndarray,
    scenario: Scenario,
    weight: np.ndarray,
    init,
    max_iter: int = 100,
    tol: float = 1e-12,
    weight_mode: WeightMode = WeightMode.CUSTOM,
) -> FusionResult:
    """Gauss-Newton minimization of ``(zeta_hat - zeta(s))^T W (zeta_hat - zeta(s))``."""
    valid = np.isfinite(zeta_hat)
    if valid.sum() < 4:
        raise RankDeficientFusion("fewer than 4 measurement rows")
    # range units keep the normal equations well scaled
    T = np.tile([SPEED_OF_LIGHT, scenario.ofdm.wavelength_m], scenario.num_links)[valid]
    Wv = weight[np.ix_(valid, valid)] / np.outer(T, T)
    Wv = Wv / np.max(np.abs(np.diag(Wv)))
    target = zeta_hat[valid] * T
    s = np.asarray(init.state if isinstance(init, TargetState) else init, dtype=float).copy()

    def residual(s):
        return target - measurement_model(scenario, s)[valid] * T

    def cost(r):
        return float(r @ Wv @ r)

    r = residual(s)
    c = cost(r)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = measurement_jacobian(scenario, s)[valid] * T[:, None]
        A = J.T @ Wv @ J
        if np.linalg.matrix_rank(A) < 4:
            raise RankDeficientFusion("normal matrix is rank deficient")
        step = np.linalg.solve(A, J.T @ Wv @ r)
        lam = 1.0
        while True:
            s_new = s + lam * step
            try:
                r_new = residual(s_new)
                c_new = cost(r_new)
            except Exception:
                c_new = np.inf
            if c_new <= c or lam < 1e-6:
                break
            lam *= 0.5
        if c_new > c:
            converged = True
            break
        s, r, c = s_new, r_new, c_new
        if np.linalg.norm(lam * step) <= tol * max(1.0, np.linalg.norm(s)):
            converged = True
            break
    result = FusionResult(s, it, converged, float(np.sqrt(max(c, 0.0))), WeightMode(weight_mode))
    if not converged:
        raise NoConvergence("fusion did not converge", best=result)
    return result


def fuse(
    reports: list[LocalReport],
    scenario: Scenario,
    weight_mode="wls",
    sigma_zeta=None,
    init=None,
    max_iter: int = 100,
) -> FusionResult:
    """Geometric LS/WLS fusion of per-link (tau, fd) reports."""
    if len(reports) < 2:
        raise RankDeficientFusion("need at least two links (4 unknowns)")
    zeta = _stack_reports(reports, scenario)
    W = fusion_weight(weight_mode, scenario, sigma_zeta)
    if init is None:
        init = coarse_fit(zeta, scenario)
    return fuse_vector(zeta, scenario, W, init, max_iter, weight_mode=WeightMode(weight_mode))


def coarse_fit(zeta_hat: np.ndarray, scenario: Scenario, start=None) -> np.ndarray:
    """Delay-only multilateration for u, then the linear Doppler solve for v."""
    tx = scenario.deployment.tx_positions
    rx = scenario.deployment.rx_positions
    Q = scenario.num_rx
    L = scenario.num_links
    taus = zeta_hat[0::2]
    fds = zeta_hat[1::2]
    ok = np.isfinite(taus)
    ranges = SPEED_OF_LIGHT * taus
    pairs = [(r // Q, r % Q) for r in range(L)]
    u = np.mean(np.vstack([tx, rx]), axis=0) if start is None else np.asarray(start, float)[:2]
    u = u + 1e-3  # keep clear of a BS sitting exactly at the centroid
    for _ in range(50):
        res, rows = [], []
        for r, (p, q) in enumerate(pairs):
            if not ok[r]:
                continue
            dp, dq = u - tx[p], u - rx[q]
            np_, nq = np.linalg.norm(dp), np.linalg.norm(dq)
            res.append(ranges[r] - np_ - nq)
            rows.append(dp / np_ + dq / nq)
        res, rows = np.array(res), np.array(rows)
        step, *_ = np.linalg.lstsq(rows, res, rcond=None)
        u = u + step
        if np.linalg.norm(step) < 1e-9:
            break
    jac = fisher.jacobians_from_positions(tx, rx, u, np.zeros(2), scenario.ofdm.wavelength_m)
    v, *_ = np.linalg.lstsq(jac.J_v[ok], fds[ok], rcond=None)
    return np.concatenate([u, v])


# ---------------------------------------------------------------------------
# SLF ML


class SlfCost:
    """Concentrated SLF cost over s with every alpha eliminated in closed form."""

    def __init__(self, obs, plan, pilots, scenario):
        self.scenario = scenario
        P, Q = scenario.num_tx, scenario.num_rx
        self.links = []
        for p in range(P):
            if not np.any(plan.sensing[p] * plan.power[p] > 0):
                continue
            for q in range(Q):
                self.links.append((p * Q + q, LinkData(obs, plan, pilots, scenario, p, q)))
        if len(self.links) < 2:
            raise RankDeficientFusion("SLF needs at least two observable links")
        self.total_energy = float(np.sum(np.abs(obs.grids) ** 2))

    def value_and_grad(self, s):
        zeta = measurement_model(self.scenario, s)
        J = measurement_jacobian(self.scenario, s)
        val = self.total_energy
        grad = np.zeros(4)
        for r, data in self.links:
            c, dc = data.correlation(zeta[2 * r], zeta[2 * r + 1], grad=True)
            val -= abs(c) ** 2 / data.energy
            dz = -2 * np.real(np.conj(c) * dc) / data.energy
            grad += dz @ J[2 * r:2 * r + 2]
        return val, grad

    def value(self, s) -> float:
        return self.value_and_grad(s)[0]

    def alpha_hats(self, s) -> np.ndarray:
        zeta = measurement_model(self.scenario, s)
        P, Q = self.scenario.num_tx, self.scenario.num_rx
        out = np.zeros((P, Q), dtype=complex)
        for r, data in self.links:
            out[r // Q, r % Q] = data.alpha_hat(zeta[2 * r], zeta[2 * r + 1])
        return out


def _whitening(scenario, plan, s, alphas) -> np.ndarray:
    """Map x -> s with unit Hessian: ``s = s0 + T x``, ``T = chol(F_eqv)^-T``.

    The Hessian of the sigma^2-normalized concentrated cost near the truth is
    ``F_eqv``, so x is measured in bound standard deviations.
    """
    trial = scenario.replace(reflections=np.where(alphas == 0, 1e-30, alphas))
    try:
        rep = fisher.slf_crb(trial, plan, TargetState.from_state(s))
        H = rep.F_eqv
        Lc = np.linalg.cholesky(0.5 * (H + H.T))
        return np.linalg.inv(Lc).T
    except Exception:
        return np.diag([1.0, 1.0, 1.0, 1.0])


def slf_estimate(
    obs: ObservationSet,
    plan: AllocationPlan,
    pilots: PilotSet,
    scenario: Scenario,
    coarse_grid=None,
    max_iter: int = 200,
) -> SlfEstimate:
    """Two-stage SLF ML: FFT+LS initialization, then quasi-Newton on the concentrated cost."""
    N, M = scenario.ofdm.shape
    coarse_grid = (4 * N, 4 * M) if coarse_grid is None else coarse_grid
    P, Q = scenario.num_tx, scenario.num_rx
    reports = []
    for p in range(P):
        if not np.any(plan.sensing[p] * plan.power[p] > 0):
            continue
        for q in range(Q):
            reports.append(plf_local_fft(obs, plan, pilots, scenario, p, q, coarse_grid, refine=True))
    zeta = _stack_reports(reports, scenario)
    s_fit = coarse_fit(zeta, scenario)
    s_ls = None
    try:
        s_ls = fuse_vector(zeta, scenario, fisher.range_domain_weight(scenario.ofdm, scenario.num_links), s_fit).s_hat
    except (NoConvergence, RankDeficientFusion) as exc:
        best = getattr(exc, "best", None)
        if best is not None:
            s_ls = best.s_hat
    # low-SNR outliers can push the coarse stage far outside the scene
    s0 = _fallback_state(scenario, s_ls, s_fit)

    cost = SlfCost(obs, plan, pilots, scenario)
    T = _whitening(scenario, plan, s0, cost.alpha_hats(s0))
    trace = [cost.value(s0)]

    sigma2 = scenario.sensing_noise.noise_power_w

    def fun(x):
        val, g = cost.value_and_grad(s0 + T @ x)
        return val / sigma2, (T.T @ g) / sigma2

    def guarded(x):
        # a line-search trial on top of a BS is simply a very bad point
        try:
            return fun(x)
        except DegenerateGeometry:
            return np.inf, np.zeros(4)

    try:
        res = optimize.minimize(
            guarded,
            np.zeros(4),
            jac=True,
            method="BFGS",
            options={"gtol": 1e-9, "maxiter": max_iter},
            callback=lambda xk: trace.append(cost.value(s0 + T @ xk)),
        )
        x, nit, ok = res.x, res.nit, bool(res.success)
        if not res.fun <= trace[0] / sigma2:
            x = np.zeros(4)
    except (DegenerateGeometry, ValueError, np.linalg.LinAlgError):
        x, nit, ok = np.zeros(4), 0, True
    try:
        x = _newton_polish(guarded, x, h=1e-4)
    except (DegenerateGeometry, np.linalg.LinAlgError):
        pass
    s_hat = s0 + T @ x
    if not plausible_state(scenario, s_hat):
        s_hat = s0
    trace.append(cost.value(s_hat))
    converged = ok or nit < max_iter
    est = SlfEstimate(s_hat, cost.alpha_hats(s_hat), s0, trace, converged)
    if not converged:
        raise NoConvergence("SLF quasi-Newton hit the iteration cap", best=est)
    return est


def plf_pipeline(
    obs: ObservationSet,
    plan: AllocationPlan,
    pilots: PilotSet,
    scenario: Scenario,
    mode="ml",
    weight_mode="wls",
    fft_size=None,
    refine: bool = True,
    sigma_zeta=None,
):
    """Local extraction on every link followed by geometric fusion.

    For ``mode='ml'`` the reports are refined from FFT initial estimates.
    ``sigma_zeta`` defaults to the equivalent local CRB blocks (oracle WLS).
    """
    N, M = scenario.ofdm.shape
    fft_size = (4 * N, 4 * M) if fft_size is None else fft_size
    P, Q = scenario.num_tx, scenario.num_rx
    reports = []
    for p in range(P):
        for q in range(Q):
            rep = plf_local_fft(obs, plan, pilots, scenario, p, q, fft_size, refine)
            if ReportMode(mode) is ReportMode.ML:
                try:
                    rep = plf_local_ml(obs, plan, pilots, scenario, p, q, rep)
                except NoConvergence as exc:
                    rep = exc.best
            reports.append(rep)
    if WeightMode(weight_mode) is WeightMode.WLS and sigma_zeta is None:
        sigma_zeta = fisher.sigma_ml_blocks(scenario, plan)
    zeta = _stack_reports(reports, scenario)
    init = coarse_fit(zeta, scenario)
    W = fusion_weight(weight_mode, scenario, sigma_zeta)
    try:
        fused = fuse_vector(zeta, scenario, W, init, weight_mode=WeightMode(weight_mode))
    except NoConvergence as exc:
        fused = exc.best
    if not plausible_state(scenario, fused.s_hat):
        s = _fallback_state(scenario, init)
        fused = FusionResult(s, fused.iterations, False, fused.residual_norm, fused.weight_mode)
    return reports, fused
