"""RE selection masks, power grids and the baseline allocation patterns.

All grids are ``(N, M)`` arrays indexed ``[subcarrier, symbol]``.  Vectorized
forms use column-major order (subcarrier index fastest), see :func:`vec`.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coopisac.errors import InvalidFraction, ParseError


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization of the trailing two (N, M) axes."""
    a = np.asarray(a)
    lead = a.shape[:-2]
    return np.swapaxes(a, -1, -2).reshape(*lead, -1)


def unvec(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    n, m = shape
    x = np.asarray(x)
    return np.swapaxes(x.reshape(*x.shape[:-1], m, n), -1, -2)


class PatternKind(str, enum.Enum):
    TDB = "tdb"
    TDI = "tdi"
    FDB = "fdb"
    FDI = "fdi"
    RANDOM = "random"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    """Binary (or relaxed) RE masks plus per-RE power.

    ``sensing``: (P, N, M), ``comm``: (P, K, N, M), ``power``: (P, N, M) in W.
    """

    sensing: np.ndarray
    comm: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sensing, dtype=float)
        p = np.asarray(self.power, dtype=float)
        c = np.asarray(self.comm, dtype=float)
        if c.ndim == 3:
            c = c[:, None]
        if c.size == 0:
            c = np.zeros((s.shape[0], 0) + s.shape[1:])
        if s.shape != p.shape or c.shape[0] != s.shape[0] or c.shape[2:] != s.shape[1:]:
            raise ValueError("inconsistent plan shapes")
        object.__setattr__(self, "sensing", s)
        object.__setattr__(self, "comm", c)
        object.__setattr__(self, "power", p)

    @property
    def num_tx(self) -> int:
        return self.sensing.shape[0]

    @property
    def num_users(self) -> int:
        return self.comm.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.sensing.shape[1:]

    def effective_sensing_power(self, p: int | None = None) -> np.ndarray:
        """``A_{p,0} ⊙ P_p`` as a grid (all Tx when ``p`` is None)."""
        eff = self.sensing * self.power
        return eff if p is None else eff[p]

    def scaled(self, factor: float) -> "AllocationPlan":
        return AllocationPlan(self.sensing, self.comm, self.power * factor)

    def occupancy(self) -> np.ndarray:
        return self.sensing.sum(axis=0) + self.comm.sum(axis=(0, 1))


def effective_sensing_power(plan: AllocationPlan, p: int) -> np.ndarray:
    """Vectorized effective sensing power ``vec(A_{p,0} ⊙ P_p)``."""
    return vec(plan.effective_sensing_power(p))


def empty_plan(num_tx: int, num_users: int, shape: tuple[int, int]) -> AllocationPlan:
    n, m = shape
    return AllocationPlan(
        np.zeros((num_tx, n, m)), np.zeros((num_tx, num_users, n, m)), np.zeros((num_tx, n, m))
    )


def validate(plan: AllocationPlan, scenario=None, tol: float = 1e-9) -> list[str]:
    """Return a list of violated rules; empty means the plan is valid."""
    out = []
    masks = [plan.sensing, plan.comm.reshape(-1, *plan.shape)]
    for arr in masks:
        if np.any((arr < -tol) | (arr > 1 + tol)):
            out.append("mask_range")
            break
    occ = plan.occupancy()
    for n, m in zip(*np.nonzero(occ > 1 + tol)):
        out.append(f"exclusivity@({n},{m})")
    if np.any(plan.power < -tol) or not np.all(np.isfinite(plan.power)):
        out.append("nonneg_power")
    if scenario is not None:
        if plan.num_tx != scenario.num_tx or plan.shape != scenario.ofdm.shape:
            out.append("shape")
        else:
            totals = plan.power.sum(axis=(1, 2))
            for p, (tot, cap) in enumerate(zip(totals, scenario.budgets)):
                if tot > cap * (1 + tol):
                    out.append(f"budget@p={p}")
    return out


# ---------------------------------------------------------------------------
# baselines


def _split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _assign_roles(indices: np.ndarray, frac: float, k_users: int, spread: bool):
    """Split an ordered index list into sensing and per-user comm subsets."""
    n = len(indices)
    if n == 0:
        return indices, [indices[:0]] * k_users
    n_sense = n if k_users == 0 else int(np.clip(round(frac * n), 1, n))
    if spread:
        pick = np.unique(np.round(np.linspace(0, n - 1, n_sense)).astype(int))
    else:
        pick = np.arange(n_sense)
    mask = np.zeros(n, dtype=bool)
    mask[pick] = True
    sensing = indices[mask]
    rest = indices[~mask]
    if k_users == 0:
        return sensing, []
    if spread:
        users = [rest[k::k_users] for k in range(k_users)]
    else:
        bounds = np.cumsum([0] + _split_counts(len(rest), k_users))
        users = [rest[bounds[k]:bounds[k + 1]] for k in range(k_users)]
    return sensing, users


def make_baseline(
    kind: PatternKind | str,
    scenario,
    sensing_fraction: float = 1.0,
    seed: int = 0,
) -> AllocationPlan:
    """Fixed orthogonal allocation pattern with uniform per-BS power.

    Time-/frequency-division block kinds give each Tx a contiguous block of
    symbols/subcarriers; interleaved kinds assign index ``i`` to Tx ``i mod P``.
    Within a Tx's share a ``sensing_fraction`` of the lines carries pilots and
    the remainder is split among the K users (blockwise for block kinds,
    round-robin for interleaved kinds).  ``random`` shuffles individual REs.
    """
    kind = PatternKind(kind)
    if not 0 < sensing_fraction <= 1:
        raise InvalidFraction(f"sensing_fraction={sensing_fraction} not in (0, 1]")
    P, K = scenario.num_tx, scenario.num_users
    N, M = scenario.ofdm.shape
    if kind is PatternKind.CUSTOM:
        raise ValueError("custom plans are built directly with AllocationPlan")
    sensing = np.zeros((P, N, M))
    comm = np.zeros((P, K, N, M))

    if kind is PatternKind.RANDOM:
        rng = np.random.default_rng(seed)
        order = rng.permutation(N * M)
        bounds = np.cumsum([0] + _split_counts(N * M, P))
        for p in range(P):
            share = order[bounds[p]:bounds[p + 1]]
            sens, users = _assign_roles(share, sensing_fraction, K, spread=False)
            sensing[p].flat[sens] = 1
            for k, idx in enumerate(users):
                comm[p, k].flat[idx] = 1
    else:
        time_axis = kind in (PatternKind.TDB, PatternKind.TDI)
        length = M if time_axis else N
        lines = np.arange(length)
        if kind in (PatternKind.TDB, PatternKind.FDB):
            bounds = np.cumsum([0] + _split_counts(length, P))
            shares = [lines[bounds[p]:bounds[p + 1]] for p in range(P)]
            spread = False
        else:
            shares = [lines[p::P] for p in range(P)]
            spread = True
        for p, share in enumerate(shares):
            sens, users = _assign_roles(share, sensing_fraction, K, spread)
            if time_axis:
                sensing[p][:, sens] = 1
                for k, idx in enumerate(users):
                    comm[p, k][:, idx] = 1
            else:
                sensing[p][sens, :] = 1
                for k, idx in enumerate(users):
                    comm[p, k][idx, :] = 1

    used = sensing + comm.sum(axis=1)
    counts = used.sum(axis=(1, 2))
    power = np.where(used > 0, (scenario.budgets / np.maximum(counts, 1))[:, None, None], 0.0)
    return AllocationPlan(sensing, comm, power)


# ---------------------------------------------------------------------------
# serialization


def write_plan_csv(plan: AllocationPlan, path) -> Path:
    """One row per assigned RE: ``p, k, n, m, power`` (k = 0 is sensing)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "k", "n", "m", "power_w"])
        P, K = plan.num_tx, plan.num_users
        for p in range(P):
            roles = [plan.sensing[p]] + [plan.comm[p, k] for k in range(K)]
            for k, mask in enumerate(roles):
                for n, m in zip(*np.nonzero(mask > 0.5)):
                    w.writerow([p, k, n, m, repr(float(plan.power[p, n, m]))])
    return path


def read_plan_csv(path, num_tx: int, num_users: int, shape: tuple[int, int]) -> AllocationPlan:
    plan = empty_plan(num_tx, num_users, shape)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        try:
            for row in reader:
                p, k, n, m = (int(row[c]) for c in ("p", "k", "n", "m"))
                if not (0 <= p < num_tx and 0 <= k <= num_users and 0 <= n < shape[0] and 0 <= m < shape[1]):
                    raise IndexError(f"index (p={p}, k={k}, n={n}, m={m}) outside the plan")
                if k == 0:
                    plan.sensing[p, n, m] = 1
                else:
                    plan.comm[p, k - 1, n, m] = 1
                plan.power[p, n, m] = float(row["power_w"])
        except (KeyError, ValueError, IndexError) as exc:
            raise ParseError(f"{path}: bad plan row: {exc}") from exc
    return plan


def role_map(plan: AllocationPlan) -> np.ndarray:
    """Integer grid: 0 unused, ``1 + p`` sensing by Tx p, ``1 + P + p*K + k`` comm."""
    P, K = plan.num_tx, plan.num_users
    out = np.zeros(plan.shape, dtype=int)
    for p in range(P):
        out[plan.sensing[p] > 0.5] = 1 + p
        for k in range(K):
            out[plan.comm[p, k] > 0.5] = 1 + P + p * K + k
    return out


def write_mask_pgm(plan: AllocationPlan, path) -> None:
    """Plain-text PGM of :func:`role_map`; rows are subcarriers."""
    roles = role_map(plan)
    top = max(1, int(roles.max()))
    lines = ["P2", f"{roles.shape[1]} {roles.shape[0]}", str(top)]
    lines += [" ".join(str(v) for v in row) for row in roles]
    Path(path).write_text("\n".join(lines) + "\n")
