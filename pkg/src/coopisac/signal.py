"""Steering vectors, frequency-domain echo synthesis and communication sum-rate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coopisac.grid import AllocationPlan, vec
from coopisac.scenario import OfdmParams, Scenario, TargetState, link_geometry


@dataclass(frozen=True, eq=False)
class SteeringPair:
    delay_steer: np.ndarray
    doppler_steer: np.ndarray


def delay_steering(ofdm: OfdmParams, tau_s) -> np.ndarray:
    n = np.arange(ofdm.num_subcarriers)
    return np.exp(-2j * np.pi * ofdm.subcarrier_spacing_hz * np.multiply.outer(tau_s, n))


def doppler_steering(ofdm: OfdmParams, fd_hz) -> np.ndarray:
    m = np.arange(ofdm.num_symbols)
    return np.exp(-2j * np.pi * ofdm.symbol_duration_s * np.multiply.outer(fd_hz, m))


def steering(ofdm: OfdmParams, tau_s: float, fd_hz: float) -> SteeringPair:
    return SteeringPair(delay_steering(ofdm, tau_s), doppler_steering(ofdm, fd_hz))


def link_response(ofdm: OfdmParams, tau_s: float, fd_hz: float) -> np.ndarray:
    """Grid ``phi(tau) psi(fd)^H`` whose column-major vec is ``psi* ⊗ phi``."""
    return np.outer(delay_steering(ofdm, tau_s), np.conj(doppler_steering(ofdm, fd_hz)))


@dataclass(frozen=True, eq=False)
class PilotSet:
    """Unit-modulus sensing pilots and unit-power data symbols, per Tx."""

    pilots: np.ndarray  # (P, N, M)
    symbols: np.ndarray  # (P, K, N, M)

    @classmethod
    def qpsk(cls, num_tx: int, num_users: int, shape, seed: int = 0) -> "PilotSet":
        rng = np.random.default_rng([seed, 17])
        n, m = shape
        ph = rng.integers(0, 4, size=(num_tx, n, m))
        pilots = np.exp(1j * (np.pi / 4 + np.pi / 2 * ph))
        sym = rng.integers(0, 4, size=(num_tx, num_users, n, m))
        return cls(pilots, np.exp(1j * (np.pi / 4 + np.pi / 2 * sym)))

    @classmethod
    def ones(cls, num_tx: int, num_users: int, shape) -> "PilotSet":
        n, m = shape
        return cls(np.ones((num_tx, n, m), complex), np.ones((num_tx, num_users, n, m), complex))

    def sensing_waveform(self, plan: AllocationPlan) -> np.ndarray:
        """``X_{p,0} = sqrt(P_p) ⊙ A_{p,0} ⊙ S_{p,0}`` for every Tx."""
        return np.sqrt(np.maximum(plan.power, 0.0)) * plan.sensing * self.pilots


@dataclass(frozen=True, eq=False)
class ObservationSet:
    grids: np.ndarray  # (Q, N, M)
    noise_power_w: float

    @property
    def stacked(self) -> np.ndarray:
        """``[vec(Y_1); ...; vec(Y_Q)]``."""
        return vec(self.grids).reshape(-1)

    def dump_csv(self, path) -> None:
        rows = ["q,n,m,re,im"]
        for q, g in enumerate(self.grids):
            for (n, m), z in np.ndenumerate(g):
                rows.append(f"{q},{n},{m},{z.real!r},{z.imag!r}")
        Path(path).write_text("\n".join(rows) + "\n")


def noiseless_echo(
    scenario: Scenario,
    plan: AllocationPlan,
    pilots: PilotSet,
    target: TargetState | None = None,
) -> np.ndarray:
    geo = link_geometry(scenario, target)
    x = pilots.sensing_waveform(plan)
    P, Q = scenario.num_tx, scenario.num_rx
    out = np.zeros((Q,) + scenario.ofdm.shape, dtype=complex)
    for p in range(P):
        for q in range(Q):
            resp = link_response(scenario.ofdm, geo.tau_s[p, q], geo.fd_hz[p, q])
            out[q] += scenario.reflections[p, q] * resp * x[p]
    return out


def check_doppler_validity(scenario: Scenario, target: TargetState | None = None) -> bool:
    geo = link_geometry(scenario, target)
    ok = bool(np.all(np.abs(geo.fd_hz) < 0.1 * scenario.ofdm.subcarrier_spacing_hz))
    if not ok:
        warnings.warn("Doppler exceeds 0.1 * subcarrier spacing; ICI-free model is inaccurate")
    return ok


def complex_noise(rng: np.random.Generator, shape, power: float) -> np.ndarray:
    return np.sqrt(power / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize(
    scenario: Scenario,
    plan: AllocationPlan,
    pilots: PilotSet,
    seed: int,
    target: TargetState | None = None,
) -> ObservationSet:
    """Noisy frequency-domain echoes at every Rx-BS (deterministic in ``seed``)."""
    check_doppler_validity(scenario, target)
    clean = noiseless_echo(scenario, plan, pilots, target)
    rng = np.random.default_rng(seed)
    sigma2 = scenario.sensing_noise.noise_power_w
    return ObservationSet(clean + complex_noise(rng, clean.shape, sigma2), sigma2)


def per_re_rate(scenario: Scenario, plan: AllocationPlan) -> np.ndarray:
    """``log2(1 + |h|^2 p a / sigma^2)`` for each (p, k, n, m)."""
    h2 = np.abs(scenario.comm.gains) ** 2
    snr = h2 * plan.power[:, None] * plan.comm / scenario.comm.noise_power_w
    return np.log2(1.0 + snr)


def sum_rate_bpshz(scenario: Scenario, plan: AllocationPlan) -> float:
    """Sum-rate averaged over all MN REs."""
    if plan.num_users == 0:
        return 0.0
    return float(per_re_rate(scenario, plan).sum() / scenario.ofdm.num_re)
