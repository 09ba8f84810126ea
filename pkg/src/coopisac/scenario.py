"""Physical scenario: OFDM numerology, BS geometry, target, channels, budgets.

Scenario files are YAML documents with SI units.  Powers may be given in
dBm or W; the key suffix (``_dbm`` / ``_w``) says which.  See README for the
full schema.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from coopisac.errors import DegenerateGeometry, ParseError, ValidationError

SPEED_OF_LIGHT = 2.99792458e8

# independent RNG streams derived from the scenario seed
_STREAM_USERS = 1
_STREAM_GAINS = 2
_STREAM_REFLECTIONS = 3


def dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_amplitude(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 20.0)


@dataclass(frozen=True)
class OfdmParams:
    carrier_freq_hz: float
    subcarrier_spacing_hz: float
    num_subcarriers: int
    num_symbols: int
    cp_duration_s: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.subcarrier_spacing_hz) and self.subcarrier_spacing_hz > 0):
            raise ValidationError("subcarrier_spacing", "must be > 0")
        if not (math.isfinite(self.carrier_freq_hz) and self.carrier_freq_hz > 0):
            raise ValidationError("carrier_freq", "must be > 0")
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 2:
            raise ValidationError("num_subcarriers", "need N >= 2")
        if int(self.num_symbols) != self.num_symbols or self.num_symbols < 2:
            raise ValidationError("num_symbols", "need M >= 2")
        object.__setattr__(self, "num_subcarriers", int(self.num_subcarriers))
        object.__setattr__(self, "num_symbols", int(self.num_symbols))
        if self.cp_duration_s is None:
            object.__setattr__(self, "cp_duration_s", self.useful_symbol_s / 8.0)
        if not (math.isfinite(self.cp_duration_s) and self.cp_duration_s >= 0):
            raise ValidationError("cp_duration", "must be >= 0")

    @property
    def useful_symbol_s(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def symbol_duration_s(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz + self.cp_duration_s

    @property
    def speed_of_light_mps(self) -> float:
        return SPEED_OF_LIGHT

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_subcarriers, self.num_symbols)

    @property
    def num_re(self) -> int:
        return self.num_subcarriers * self.num_symbols


@dataclass(frozen=True, eq=False)
class Deployment:
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    num_users: int = 0

    def __post_init__(self):
        tx = np.atleast_2d(np.asarray(self.tx_positions, dtype=float))
        rx = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        if tx.shape[1] != 2 or tx.shape[0] < 1:
            raise ValidationError("tx_positions", "need at least one 2-D position")
        if rx.shape[1] != 2 or rx.shape[0] < 1:
            raise ValidationError("rx_positions", "need at least one 2-D position")
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
            raise ValidationError("positions", "must be finite")
        if self.num_users < 0:
            raise ValidationError("num_users", "must be >= 0")
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "num_users", int(self.num_users))

    @property
    def num_tx(self) -> int:
        return self.tx_positions.shape[0]

    @property
    def num_rx(self) -> int:
        return self.rx_positions.shape[0]


@dataclass(frozen=True, eq=False)
class TargetState:
    position_m: np.ndarray
    velocity_mps: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.position_m, dtype=float).reshape(2)
        v = np.asarray(self.velocity_mps, dtype=float).reshape(2)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValidationError("target", "state must be finite")
        object.__setattr__(self, "position_m", u)
        object.__setattr__(self, "velocity_mps", v)

    @property
    def state(self) -> np.ndarray:
        """Stacked ``[x, y, vx, vy]``."""
        return np.concatenate([self.position_m, self.velocity_mps])

    @classmethod
    def from_state(cls, s) -> "TargetState":
        s = np.asarray(s, dtype=float)
        return cls(s[:2], s[2:4])


@dataclass(frozen=True, eq=False)
class CommChannel:
    gains: np.ndarray  # (P, K, N, M) complex
    noise_power_w: float
    pathloss_exponent: float
    pathloss_ref_db: float
    user_positions: np.ndarray  # (K, 2)

    def __post_init__(self):
        if not self.noise_power_w > 0:
            raise ValidationError("comm_noise_power", "must be > 0")
        if not np.all(np.isfinite(self.gains)):
            raise ValidationError("comm_gains", "must be finite")


@dataclass(frozen=True)
class SensingNoise:
    noise_power_w: float

    def __post_init__(self):
        if not (math.isfinite(self.noise_power_w) and self.noise_power_w > 0):
            raise ValidationError("sensing_noise_power", "must be > 0")


@dataclass(frozen=True)
class SidelobeSpec:
    beta0: float
    l_max: int
    nu_max: int

    @property
    def beta0_db(self) -> float:
        return 20.0 * math.log10(self.beta0)


@dataclass(frozen=True)
class CrbWeights:
    lambda_p: float = 1.0
    lambda_v: float = 1.0
    d0_m: float = 1.0
    v0_mps: float = 1.0

    def __post_init__(self):
        for name in ("lambda_p", "lambda_v", "d0_m", "v0_mps"):
            if not getattr(self, name) > 0:
                raise ValidationError("weights", f"{name} must be > 0")

    def matrix(self) -> np.ndarray:
        wp = self.lambda_p / self.d0_m**2
        wv = self.lambda_v / self.v0_mps**2
        return np.diag([wp, wp, wv, wv])


@dataclass(frozen=True)
class UserRegions:
    centers: tuple[tuple[float, float], ...]
    radius_m: float


@dataclass(frozen=True, eq=False)
class Scenario:
    ofdm: OfdmParams
    deployment: Deployment
    target: TargetState
    comm: CommChannel
    sensing_noise: SensingNoise
    reflections: np.ndarray  # (P, Q) complex
    budgets: np.ndarray  # (P,) W
    rate_threshold_bpshz: float
    sidelobe: SidelobeSpec
    crb_weights: CrbWeights = field(default_factory=CrbWeights)
    seed: int = 0
    user_regions: UserRegions | None = None

    def __post_init__(self):
        P, Q = self.deployment.num_tx, self.deployment.num_rx
        N, M = self.ofdm.shape
        refl = np.asarray(self.reflections, dtype=complex)
        if refl.shape != (P, Q):
            raise ValidationError("reflections", f"expected shape {(P, Q)}, got {refl.shape}")
        budgets = np.broadcast_to(np.asarray(self.budgets, dtype=float), (P,)).copy()
        if not np.all(budgets > 0):
            raise ValidationError("budgets", "P_tot must be > 0 for every Tx")
        if not 0 < self.sidelobe.beta0 < 1:
            raise ValidationError("beta0", "must lie in (0, 1)")
        if not 0 <= self.sidelobe.l_max < N:
            raise ValidationError("l_max", "need 0 <= l_max < N")
        if not 0 <= self.sidelobe.nu_max < M:
            raise ValidationError("nu_max", "need 0 <= nu_max < M")
        if self.rate_threshold_bpshz < 0:
            raise ValidationError("rate_threshold", "must be >= 0")
        K = self.deployment.num_users
        if self.comm.gains.shape != (P, K, N, M):
            raise ValidationError("comm_gains", f"expected shape {(P, K, N, M)}")
        object.__setattr__(self, "reflections", refl)
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def num_tx(self) -> int:
        return self.deployment.num_tx

    @property
    def num_rx(self) -> int:
        return self.deployment.num_rx

    @property
    def num_users(self) -> int:
        return self.deployment.num_users

    @property
    def num_links(self) -> int:
        return self.num_tx * self.num_rx

    def weight_matrix(self) -> np.ndarray:
        return self.crb_weights.matrix()

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_target(self, target: TargetState) -> "Scenario":
        return dataclasses.replace(self, target=target)

    def with_snr(self, snr_db: float) -> "Scenario":
        """Rescale every reflection magnitude by a common factor to hit ``snr_db``."""
        current = average_snr_db(self)
        factor = db_to_amplitude(snr_db - current)
        return dataclasses.replace(self, reflections=self.reflections * float(factor))


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True, eq=False)
class LinkGeometry:
    """Per-link bistatic delay ``tau_s[p, q]`` and Doppler ``fd_hz[p, q]``."""

    tau_s: np.ndarray
    fd_hz: np.ndarray

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.tau_s, self.fd_hz], axis=-1)


def unit_vectors(points: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors from each BS toward ``u`` and the corresponding distances."""
    diff = np.asarray(u, dtype=float)[None, :] - np.asarray(points, dtype=float)
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= 1e-9 * max(1.0, float(np.max(np.abs(u))))):
        raise DegenerateGeometry("target coincides with a base station")
    return diff / dist[:, None], dist


def link_geometry(scenario: Scenario, target: TargetState | None = None) -> LinkGeometry:
    target = scenario.target if target is None else target
    return geometry_from_positions(
        scenario.deployment.tx_positions,
        scenario.deployment.rx_positions,
        target.position_m,
        target.velocity_mps,
        scenario.ofdm.wavelength_m,
    )


def geometry_from_positions(tx, rx, u, v, wavelength) -> LinkGeometry:
    r_tx, d_tx = unit_vectors(tx, u)
    r_rx, d_rx = unit_vectors(rx, u)
    tau = (d_tx[:, None] + d_rx[None, :]) / SPEED_OF_LIGHT
    v = np.asarray(v, dtype=float)
    fd = ((r_tx @ v)[:, None] + (r_rx @ v)[None, :]) / wavelength
    return LinkGeometry(tau, fd)


# ---------------------------------------------------------------------------
# channels and SNR


def pathloss(distance_m, ref_db: float, exponent: float):
    """Linear power path loss ``10**(C0/10) * d**-alpha``."""
    return 10.0 ** (ref_db / 10.0) * np.asarray(distance_m, dtype=float) ** (-exponent)


def draw_user_positions(regions: UserRegions, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _STREAM_USERS])
    centers = np.asarray(regions.centers, dtype=float).reshape(-1, 2)
    r = regions.radius_m * np.sqrt(rng.random(len(centers)))
    theta = 2 * np.pi * rng.random(len(centers))
    return centers + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _rayleigh_gains(tx, users, shape, ref_db, exponent, seed) -> np.ndarray:
    P, K = len(tx), len(users)
    N, M = shape
    if K == 0:
        return np.zeros((P, 0, N, M), dtype=complex)
    dist = np.linalg.norm(np.asarray(tx)[:, None, :] - np.asarray(users)[None, :, :], axis=2)
    amp = np.sqrt(pathloss(dist, ref_db, exponent))
    rng = np.random.default_rng([seed, _STREAM_GAINS])
    g = (rng.standard_normal((P, K, N, M)) + 1j * rng.standard_normal((P, K, N, M))) / np.sqrt(2)
    return amp[:, :, None, None] * g


def realize_comm_channel(scenario: Scenario, seed: int) -> CommChannel:
    """Fresh Rayleigh realization on every RE for the scenario's users."""
    c = scenario.comm
    gains = _rayleigh_gains(
        scenario.deployment.tx_positions,
        c.user_positions,
        scenario.ofdm.shape,
        c.pathloss_ref_db,
        c.pathloss_exponent,
        seed,
    )
    return dataclasses.replace(c, gains=gains)


def average_snr_db(scenario: Scenario) -> float:
    """Average receive SNR over all bistatic links, in dB."""
    ratio = scenario.budgets[:, None] * np.abs(scenario.reflections) ** 2
    return float(10.0 * np.log10(np.mean(ratio) / scenario.sensing_noise.noise_power_w))


def reflections_for_snr(budgets, noise_power_w, snr_db, num_rx, seed) -> np.ndarray:
    """Unit-magnitude random-phase reflections scaled to a target average SNR."""
    budgets = np.asarray(budgets, dtype=float)
    rng = np.random.default_rng([seed, _STREAM_REFLECTIONS])
    phases = np.exp(2j * np.pi * rng.random((len(budgets), num_rx)))
    mean_gain = np.mean(budgets) / noise_power_w  # |alpha| = 1
    scale = math.sqrt(10.0 ** (snr_db / 10.0) / mean_gain)
    return scale * phases


# ---------------------------------------------------------------------------
# file I/O


def _power_w(section: dict, stem: str, where: str):
    if f"{stem}_w" in section:
        return section[f"{stem}_w"]
    if f"{stem}_dbm" in section:
        return dbm_to_w(section[f"{stem}_dbm"])
    raise ParseError(f"{where}: missing {stem}_w or {stem}_dbm")


def _require(tree: dict, key: str, where: str = "scenario"):
    if not isinstance(tree, dict) or key not in tree:
        raise ParseError(f"{where}: missing '{key}'")
    return tree[key]


def scenario_from_dict(tree: dict) -> Scenario:
    """Build a validated :class:`Scenario` from a parsed key/value tree."""
    if not isinstance(tree, dict):
        raise ParseError("scenario document must be a mapping")
    try:
        seed = int(tree.get("seed", 0))
        o = _require(tree, "ofdm")
        ofdm = OfdmParams(
            carrier_freq_hz=float(_require(o, "carrier_freq_hz", "ofdm")),
            subcarrier_spacing_hz=float(_require(o, "subcarrier_spacing_hz", "ofdm")),
            num_subcarriers=_require(o, "num_subcarriers", "ofdm"),
            num_symbols=_require(o, "num_symbols", "ofdm"),
            cp_duration_s=None if o.get("cp_duration_s") is None else float(o["cp_duration_s"]),
        )
        d = _require(tree, "deployment")
        dep = Deployment(
            _require(d, "tx_positions", "deployment"),
            _require(d, "rx_positions", "deployment"),
            int(d.get("num_users", 0)),
        )
        t = _require(tree, "target")
        target = TargetState(_require(t, "position_m", "target"), t.get("velocity_mps", [0.0, 0.0]))

        budgets_node = _require(tree, "budgets")
        if isinstance(budgets_node, dict):
            if "per_re_w" in budgets_node:
                budgets = np.full(dep.num_tx, float(budgets_node["per_re_w"]) * ofdm.num_re)
            else:
                budgets = np.broadcast_to(
                    np.asarray(_power_w(budgets_node, "total", "budgets"), dtype=float),
                    (dep.num_tx,),
                )
        else:
            budgets = np.broadcast_to(np.asarray(budgets_node, dtype=float), (dep.num_tx,))

        if not np.all(np.asarray(budgets) > 0):
            raise ValidationError("budgets", "P_tot must be > 0 for every Tx")

        s = _require(tree, "sensing")
        sensing = SensingNoise(float(_power_w(s, "noise_power", "sensing")))
        if "reflections" in s:
            raw = np.asarray(s["reflections"], dtype=float)
            refl = raw[..., 0] + 1j * raw[..., 1]
        else:
            refl = reflections_for_snr(
                budgets, sensing.noise_power_w, float(s.get("snr_db", 20.0)), dep.num_rx, seed
            )

        c = tree.get("comm", {}) or {}
        regions = None
        if "user_centers" in c:
            regions = UserRegions(
                tuple(tuple(map(float, xy)) for xy in c["user_centers"]),
                float(c.get("user_radius_m", 0.0)),
            )
        if "user_positions" in c:
            users = np.asarray(c["user_positions"], dtype=float).reshape(-1, 2)
        elif regions is not None:
            users = draw_user_positions(regions, seed)
        else:
            users = np.zeros((0, 2))
        if len(users) != dep.num_users:
            raise ValidationError("num_users", f"{dep.num_users} users declared, {len(users)} placed")
        alpha = float(c.get("pathloss_exponent", 2.4))
        c0 = float(c.get("pathloss_ref_db", -30.0))
        comm_noise = float(_power_w(c, "noise_power", "comm")) if c else sensing.noise_power_w
        gains = _rayleigh_gains(dep.tx_positions, users, ofdm.shape, c0, alpha, seed)
        comm = CommChannel(gains, comm_noise, alpha, c0, users)

        sl = _require(tree, "sidelobe")
        if "beta0" in sl:
            beta0 = float(sl["beta0"])
        else:
            beta0 = float(db_to_amplitude(float(_require(sl, "beta0_db", "sidelobe"))))
        sidelobe = SidelobeSpec(beta0, int(sl.get("l_max", 0)), int(sl.get("nu_max", 0)))

        w = tree.get("weights", {}) or {}
        weights = CrbWeights(
            float(w.get("lambda_p", 1.0)),
            float(w.get("lambda_v", 1.0)),
            float(w.get("d0_m", 1.0)),
            float(w.get("v0_mps", 1.0)),
        )
        return Scenario(
            ofdm=ofdm,
            deployment=dep,
            target=target,
            comm=comm,
            sensing_noise=sensing,
            reflections=refl,
            budgets=budgets,
            rate_threshold_bpshz=float(tree.get("rate_threshold_bpshz", 0.0)),
            sidelobe=sidelobe,
            crb_weights=weights,
            seed=seed,
            user_regions=regions,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(str(exc)) from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    """Explicit tree that reloads to a field-identical scenario."""

    def pts(a):
        return [[float(x) for x in row] for row in np.asarray(a)]

    tree = {
        "seed": scenario.seed,
        "ofdm": {
            "carrier_freq_hz": float(scenario.ofdm.carrier_freq_hz),
            "subcarrier_spacing_hz": float(scenario.ofdm.subcarrier_spacing_hz),
            "num_subcarriers": scenario.ofdm.num_subcarriers,
            "num_symbols": scenario.ofdm.num_symbols,
            "cp_duration_s": float(scenario.ofdm.cp_duration_s),
        },
        "deployment": {
            "tx_positions": pts(scenario.deployment.tx_positions),
            "rx_positions": pts(scenario.deployment.rx_positions),
            "num_users": scenario.num_users,
        },
        "target": {
            "position_m": [float(x) for x in scenario.target.position_m],
            "velocity_mps": [float(x) for x in scenario.target.velocity_mps],
        },
        "comm": {
            "noise_power_w": float(scenario.comm.noise_power_w),
            "pathloss_exponent": float(scenario.comm.pathloss_exponent),
            "pathloss_ref_db": float(scenario.comm.pathloss_ref_db),
            "user_positions": pts(scenario.comm.user_positions),
        },
        "sensing": {
            "noise_power_w": float(scenario.sensing_noise.noise_power_w),
            "reflections": [
                [[float(z.real), float(z.imag)] for z in row] for row in scenario.reflections
            ],
        },
        "sidelobe": {
            "beta0": float(scenario.sidelobe.beta0),
            "l_max": scenario.sidelobe.l_max,
            "nu_max": scenario.sidelobe.nu_max,
        },
        "weights": dataclasses.asdict(scenario.crb_weights),
        "budgets": [float(b) for b in scenario.budgets],
        "rate_threshold_bpshz": float(scenario.rate_threshold_bpshz),
    }
    if scenario.user_regions is not None:
        tree["comm"]["user_centers"] = [list(c) for c in scenario.user_regions.centers]
        tree["comm"]["user_radius_m"] = scenario.user_regions.radius_m
    return tree


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(tree)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides (values parsed as YAML scalars)."""
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override '{item}' is not key=value")
        key, raw = item.split("=", 1)
        node = tree
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return tree


# ---------------------------------------------------------------------------
# canned scenarios

TABLE2_TX = [[-80.0, 80.0], [80.0, -80.0]]
TABLE2_RX = [[80.0, 80.0], [-80.0, -80.0]]
TABLE2_USER_CENTERS = [[-50.0, 60.0], [60.0, -45.0]]


def table2_tree(
    num_subcarriers: int = 128,
    num_symbols: int = 64,
    num_users: int = 2,
    snr_db: float = 20.0,
    seed: int = 0,
    l_max: int | None = None,
    nu_max: int | None = None,
    rate_threshold_bpshz: float = 5.0,
    per_re_w: float = 1.0,
    target_position_m=(40.0, 35.0),
    target_velocity_mps=(15.0, 15.0),
) -> dict:
    """Scenario tree with the reference simulation parameters.

    Grid sizes can be shrunk for desk runs; the sidelobe window then scales
    with the grid (32/128 of N, 12/64 of M) unless given explicitly.
    """
    if l_max is None:
        l_max = max(1, round(32 * num_subcarriers / 128))
    if nu_max is None:
        nu_max = max(1, round(12 * num_symbols / 64))
    return {
        "seed": seed,
        "ofdm": {
            "carrier_freq_hz": 24e9,
            "subcarrier_spacing_hz": 120e3,
            "num_subcarriers": num_subcarriers,
            "num_symbols": num_symbols,
        },
        "deployment": {"tx_positions": TABLE2_TX, "rx_positions": TABLE2_RX, "num_users": num_users},
        "target": {"position_m": [float(x) for x in target_position_m], "velocity_mps": [float(x) for x in target_velocity_mps]},
        "comm": {
            "noise_power_dbm": -80.0,
            "pathloss_exponent": 2.4,
            "pathloss_ref_db": -30.0,
            "user_centers": TABLE2_USER_CENTERS[:num_users],
            "user_radius_m": 10.0,
        },
        "sensing": {"noise_power_dbm": -80.0, "snr_db": snr_db},
        "sidelobe": {"beta0_db": -10.0, "l_max": l_max, "nu_max": nu_max},
        "weights": {"lambda_p": 1.0, "lambda_v": 1.0, "d0_m": 1.0, "v0_mps": 1.0},
        "budgets": {"per_re_w": per_re_w},
        "rate_threshold_bpshz": rate_threshold_bpshz,
    }


def desk_scenario(num_subcarriers=32, num_symbols=16, **kw) -> Scenario:
    return scenario_from_dict(table2_tree(num_subcarriers, num_symbols, **kw))


def draw_target(seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Target drawn uniformly from the reference position/velocity boxes."""
    rng = np.random.default_rng(seed)
    u = rng.uniform([35.0, 30.0], [45.0, 40.0])
    v = rng.uniform([10.0, 10.0], [20.0, 20.0])
    return u, v


def optimizer_desk_scenario(seed: int = 0, random_target: bool = False, **kw) -> Scenario:
    """Small grid (16 x 8, one user) on which the allocation solver runs in seconds.

    The per-RE budget of 0.5 W puts the absolute sidelobe cap in the regime
    where it binds without dominating the design.
    """
    opts = dict(num_users=1, rate_threshold_bpshz=2.0, per_re_w=0.5, seed=seed)
    if random_target:
        u, v = draw_target(seed)
        opts.update(target_position_m=u, target_velocity_mps=v)
    opts.update(kw)
    return scenario_from_dict(table2_tree(16, 8, **opts))
