"""Delay-Doppler sidelobe samples of the effective sensing power pattern."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coopisac.errors import ZeroMainlobe
from coopisac.grid import AllocationPlan, vec
from coopisac.scenario import OfdmParams
from coopisac.signal import delay_steering, doppler_steering

CLAMP_DB = -120.0


@dataclass(frozen=True)
class SidelobeLattice:
    l_max: int
    nu_max: int

    def offsets(self, half: bool = False) -> np.ndarray:
        """Integer bins of the window except (0, 0), shape (S, 2).

        With ``half`` only one of each conjugate pair ``(l, nu)``/``(-l, -nu)``
        is kept (|Gamma| is equal on both).
        """
        ls, nus = np.meshgrid(
            np.arange(-self.l_max, self.l_max + 1),
            np.arange(-self.nu_max, self.nu_max + 1),
            indexing="ij",
        )
        pts = np.stack([ls.ravel(), nus.ravel()], axis=1)
        keep = ~((pts[:, 0] == 0) & (pts[:, 1] == 0))
        if half:
            keep &= (pts[:, 0] > 0) | ((pts[:, 0] == 0) & (pts[:, 1] > 0))
        return pts[keep]

    @property
    def size(self) -> int:
        return (2 * self.l_max + 1) * (2 * self.nu_max + 1) - 1


def gamma_grid(eff: np.ndarray, l, nu) -> complex:
    """Direct double sum over the (N, M) effective power grid."""
    N, M = eff.shape
    n = np.arange(N)[:, None]
    m = np.arange(M)[None, :]
    kern = np.exp(-2j * np.pi * l * n / N) * np.exp(2j * np.pi * nu * m / M)
    return complex(np.sum(eff * kern) / (N * M))


def gamma(plan: AllocationPlan, p: int, l: int, nu: int, ofdm: OfdmParams | None = None) -> complex:
    """Sidelobe-amplitude sample ``Gamma_p(l, nu)``."""
    return gamma_grid(plan.effective_sensing_power(p), l, nu)


def sampled_kernel(ofdm: OfdmParams, l: int, nu: int) -> np.ndarray:
    """``(psi_nu^H ⊗ phi_l)`` with the sampled steering vectors (length MN).

    ``phi_l = phi(l / (N df))`` and ``psi_nu = psi(nu / (M Ts))``.
    """
    N, M = ofdm.shape
    phi = delay_steering(ofdm, l / (N * ofdm.subcarrier_spacing_hz))
    psi = doppler_steering(ofdm, nu / (M * ofdm.symbol_duration_s))
    return np.kron(np.conj(psi), phi)


def gamma_vectorized(plan: AllocationPlan, p: int, l: int, nu: int, ofdm: OfdmParams) -> complex:
    eff = vec(plan.effective_sensing_power(p))
    return complex(sampled_kernel(ofdm, l, nu) @ eff / ofdm.num_re)


def gamma_matrix(lattice_offsets: np.ndarray, shape) -> np.ndarray:
    """Rows map a vec'd effective-power vector to ``Gamma`` at each offset.

    Shape (S, MN), complex; used by the optimizer (Gamma is linear in power).
    """
    N, M = shape
    n = np.tile(np.arange(N), M)
    m = np.repeat(np.arange(M), N)
    l = lattice_offsets[:, 0:1]
    nu = lattice_offsets[:, 1:2]
    return np.exp(-2j * np.pi * l * n / N + 2j * np.pi * nu * m / M) / (N * M)


def full_surface(eff: np.ndarray) -> np.ndarray:
    """``Gamma(l, nu)`` for all ``l in [0, N)``, ``nu in [0, M)`` via one 2-D FFT."""
    N, M = eff.shape
    return np.fft.ifft(np.fft.fft(eff, axis=0), axis=1) / N


def window_values(eff: np.ndarray, lattice: SidelobeLattice) -> tuple[np.ndarray, np.ndarray]:
    N, M = eff.shape
    surf = full_surface(eff)
    pts = lattice.offsets()
    return pts, surf[pts[:, 0] % N, pts[:, 1] % M]


@dataclass(frozen=True)
class SidelobeReport:
    p: int
    peak_abs: float
    argmax: tuple[int, int]
    mainlobe: float
    satisfied: bool


def check_sidelobes(plan: AllocationPlan, scenario, rel_tol: float = 1e-9) -> list[SidelobeReport]:
    """Exhaustive peak of ``|Gamma_p|`` over the sidelobe window, per Tx."""
    lattice = SidelobeLattice(scenario.sidelobe.l_max, scenario.sidelobe.nu_max)
    beta0 = scenario.sidelobe.beta0
    out = []
    for p in range(plan.num_tx):
        eff = plan.effective_sensing_power(p)
        pts, vals = window_values(eff, lattice)
        mags = np.abs(vals)
        if len(mags) == 0:
            out.append(SidelobeReport(p, 0.0, (0, 0), float(eff.sum() / eff.size), True))
            continue
        i = int(np.argmax(mags))
        peak = float(mags[i])
        out.append(
            SidelobeReport(
                p,
                peak,
                (int(pts[i, 0]), int(pts[i, 1])),
                float(eff.sum() / eff.size),
                peak <= beta0 * (1 + rel_tol),
            )
        )
    return out


def peak_sidelobe(plan: AllocationPlan, scenario) -> float:
    return max(r.peak_abs for r in check_sidelobes(plan, scenario))


@dataclass(frozen=True, eq=False)
class AmbiguitySurface:
    p: int
    l_values: np.ndarray
    nu_values: np.ndarray
    values: np.ndarray  # complex Gamma over (l, nu)
    mainlobe: float

    @property
    def db(self) -> np.ndarray:
        if self.mainlobe <= 0:
            raise ZeroMainlobe(f"Tx {self.p} has no sensing power")
        with np.errstate(divide="ignore"):
            out = 20 * np.log10(np.abs(self.values) / self.mainlobe)
        return np.maximum(out, CLAMP_DB)

    def write_csv(self, path) -> None:
        db = self.db
        lines = [
            f"# p={self.p} l_min={self.l_values[0]} l_max={self.l_values[-1]} "
            f"nu_min={self.nu_values[0]} nu_max={self.nu_values[-1]} "
            f"normalization=20log10(|Gamma|/Gamma(0,0)) clamp={CLAMP_DB}",
            "l,nu,value_db",
        ]
        for i, l in enumerate(self.l_values):
            for j, nu in enumerate(self.nu_values):
                lines.append(f"{l},{nu},{db[i, j]:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")


def surface_export(plan: AllocationPlan, p: int, l_range, nu_range) -> AmbiguitySurface:
    eff = plan.effective_sensing_power(p)
    main = float(eff.sum() / eff.size)
    if main <= 0:
        raise ZeroMainlobe(f"Tx {p} has no sensing power")
    N, M = eff.shape
    surf = full_surface(eff)
    ls = np.arange(l_range[0], l_range[1] + 1)
    nus = np.arange(nu_range[0], nu_range[1] + 1)
    vals = surf[np.ix_(ls % N, nus % M)]
    return AmbiguitySurface(p, ls, nus, vals, main)
