"""Seeded experiment harness: RMSE sweeps, FFT-resolution sweeps, bound maps
and allocation tradeoffs, all reduced into CSV-ready result tables.

Every stochastic quantity is driven by ``SeedSequence([seed, point, trial])``
so results do not depend on evaluation order or on the number of workers.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from coopisac import __version__, estimate, fisher
from coopisac.errors import CoopIsacError, NoConvergence, ValidationError
from coopisac.grid import AllocationPlan, make_baseline, role_map
from coopisac.scenario import (
    Deployment,
    Scenario,
    SidelobeSpec,
    TargetState,
    db_to_amplitude,
    draw_target,
    scenario_to_dict,
)
from coopisac.signal import PilotSet, synthesize

Z95 = 1.959963984540054


class ExperimentKind(str, enum.Enum):
    RMSE_VS_SNR = "rmse_vs_snr"
    FFT_SWEEP = "fft_sweep"
    RATE_TRADEOFF = "rate_tradeoff"
    SIDELOBE_SWEEP = "sidelobe_sweep"
    PEB_MAP = "peb_map"
    SIGMA_FFT_ESTIMATION = "sigma_fft_estimation"


ESTIMATOR_MODES = ("slf", "plf_ml_wls", "plf_ml_ls", "plf_fft_ls")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    sweep: tuple
    trials: int = 200
    modes: tuple = ("slf", "plf_ml_wls", "plf_fft_ls")
    baselines: tuple = ("tdb", "fdb")
    seed: int = 0
    plan_kind: str = "tdb"
    sensing_fraction: float = 1.0
    random_target: bool = True
    fft_factor: int = 4
    fft_refine: bool = False
    num_random: int = 10
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "sweep", tuple(self.sweep))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.trials < 1:
            raise ValidationError("trials", "must be >= 1")
        if len(self.sweep) == 0:
            raise ValidationError("sweep", "must be nonempty")
        bad = [m for m in self.modes if m not in ESTIMATOR_MODES]
        if bad:
            raise ValidationError("modes", f"unknown estimator modes {bad}")


# ---------------------------------------------------------------------------
# result table


@dataclass(frozen=True)
class ResultRow:
    sweep: tuple
    metric: str
    value: float | None  # None marks a missing value (e.g. singular point)
    ci_halfwidth: float = 0.0
    trials: int = 0


@dataclass
class ResultTable:
    sweep_names: tuple
    rows: list[ResultRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, sweep, metric, value, ci=0.0, trials=0):
        sweep = tuple(float(s) for s in np.atleast_1d(sweep))
        value = None if value is None or not np.isfinite(value) else float(value)
        self.rows.append(ResultRow(sweep, metric, value, float(ci), int(trials)))

    def metrics(self) -> list[str]:
        return sorted({r.metric for r in self.rows})

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        """Sweep values and values of one metric (missing values as NaN)."""
        rows = [r for r in self.rows if r.metric == metric]
        xs = np.array([r.sweep if len(r.sweep) > 1 else r.sweep[0] for r in rows])
        ys = np.array([np.nan if r.value is None else r.value for r in rows])
        return xs, ys

    def value(self, metric: str, sweep) -> float:
        key = tuple(float(s) for s in np.atleast_1d(sweep))
        for r in self.rows:
            if r.metric == metric and r.sweep == key:
                return np.nan if r.value is None else r.value
        raise KeyError((metric, key))

    def validate(self) -> None:
        """Schema check before writing: names, arity, finiteness, CI discipline."""
        for r in self.rows:
            if len(r.sweep) != len(self.sweep_names):
                raise ValidationError("result_table", f"row {r} has wrong sweep arity")
            if not r.metric or "," in r.metric:
                raise ValidationError("result_table", f"bad metric name {r.metric!r}")
            if r.value is not None and not math.isfinite(r.value):
                raise ValidationError("result_table", f"non-finite value in {r.metric}")
            if not (math.isfinite(r.ci_halfwidth) and r.ci_halfwidth >= 0):
                raise ValidationError("result_table", f"bad CI in {r.metric}")
            if r.ci_halfwidth > 0 and r.trials < 1:
                raise ValidationError("result_table", f"CI without trial count in {r.metric}")

    def write_csv(self, path) -> Path:
        self.validate()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            for k, v in self.metadata.items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh)
            w.writerow(list(self.sweep_names) + ["metric", "value", "ci_halfwidth", "trials"])
            for r in self.rows:
                val = "" if r.value is None else repr(r.value)
                w.writerow([repr(s) for s in r.sweep] + [r.metric, val, repr(r.ci_halfwidth), r.trials])
        return path

    @classmethod
    def read_csv(cls, path) -> "ResultTable":
        meta, lines = {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# "):
                k, _, v = line[2:].partition("=")
                meta[k] = v
            elif line:
                lines.append(line)
        reader = csv.reader(lines)
        header = next(reader)
        ns = len(header) - 4
        table = cls(tuple(header[:ns]), metadata=meta)
        for row in reader:
            val = None if row[ns + 1] == "" else float(row[ns + 1])
            table.rows.append(
                ResultRow(tuple(float(x) for x in row[:ns]), row[ns], val, float(row[ns + 2]), int(row[ns + 3]))
            )
        return table


def scenario_hash(scenario: Scenario) -> str:
    text = yaml.safe_dump(scenario_to_dict(scenario), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _metadata(kind, scenario, spec=None, **extra) -> dict:
    meta = {"kind": str(getattr(kind, "value", kind)), "scenario_hash": scenario_hash(scenario)}
    meta["provenance"] = f"coopisac {__version__}; numpy {np.__version__}"
    if spec is not None:
        meta["seed"] = spec.seed
        meta["trials"] = spec.trials
    meta.update(extra)
    return meta


def write_manifest(path, table: ResultTable, outputs) -> Path:
    path = Path(path)
    doc = {"metadata": dict(table.metadata), "outputs": [str(p) for p in outputs]}
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


# ---------------------------------------------------------------------------
# statistics


def rmse_with_ci(errors_sq: np.ndarray) -> tuple[float, float]:
    """RMSE of squared errors and a delta-method 95% CI half-width."""
    e = np.asarray(errors_sq, dtype=float)
    n = len(e)
    mse = float(np.mean(e))
    if n < 2 or mse <= 0:
        return math.sqrt(max(mse, 0.0)), 0.0
    se = float(np.std(e, ddof=1)) / math.sqrt(n)
    return math.sqrt(mse), Z95 * se / (2 * math.sqrt(mse))


def trial_seed(seed: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, point, trial]).generate_state(1)[0])


def _map(fn, items, workers: int):
    """Ordered map; results are reduced in item order whatever the pool does."""
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# per-trial estimation


def run_estimator(mode: str, obs, plan, pilots, scenario, fft_factor=4, fft_refine=False) -> np.ndarray:
    """State estimate of one estimator configuration."""
    N, M = scenario.ofdm.shape
    if mode == "slf":
        try:
            return estimate.slf_estimate(obs, plan, pilots, scenario).s_hat
        except NoConvergence as exc:
            return exc.best.s_hat
    if mode in ("plf_ml_wls", "plf_ml_ls"):
        wm = "wls" if mode.endswith("wls") else "ls"
        _, fused = estimate.plf_pipeline(obs, plan, pilots, scenario, mode="ml", weight_mode=wm)
        return fused.s_hat
    if mode == "plf_fft_ls":
        size = (fft_factor * N, fft_factor * M)
        _, fused = estimate.plf_pipeline(obs, plan, pilots, scenario, mode="fft", weight_mode="ls", fft_size=size, refine=fft_refine)
        return fused.s_hat
    raise ValueError(f"unknown estimator mode {mode!r}")


def trial_targets(scenario: Scenario, seed: int, trials: int, point: int = 0) -> list[Scenario]:
    """Per-trial scenarios with the targets a random-target experiment draws."""
    return [_trial_scenario(scenario, trial_seed(seed, point, t), True) for t in range(trials)]


def _trial_scenario(scenario: Scenario, seed: int, random_target: bool) -> Scenario:
    if not random_target:
        return scenario
    u, v = draw_target(seed)
    return scenario.with_target(TargetState(u, v))


def _bounds(scenario, plan) -> dict:
    rep = fisher.slf_crb(scenario, plan)
    sig = fisher.sigma_ml_blocks(scenario, plan)
    ls = fisher.ts_crb(scenario, sig, "identity")
    return {
        "crb_pos": rep.position_bound,
        "crb_vel": rep.velocity_bound,
        "crb_total": rep.crb_weighted,
        "tscrb_ls_pos": ls.position_bound,
        "tscrb_ls_vel": ls.velocity_bound,
        "tscrb_ls_total": ls.ts_crb,
    }


@dataclass(frozen=True)
class _TrialJob:
    scenario: Scenario
    plan: AllocationPlan
    pilots: PilotSet
    seed: int
    modes: tuple
    random_target: bool
    fft_factors: tuple
    fft_refine: bool


def _run_trial(job: _TrialJob) -> dict:
    sc = _trial_scenario(job.scenario, job.seed, job.random_target)
    W = sc.weight_matrix()
    truth = sc.target.state
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        obs = synthesize(sc, job.plan, job.pilots, job.seed)
    out = {"bounds": _bounds(sc, job.plan), "err": {}}
    for mode in job.modes:
        factors = job.fft_factors if mode == "plf_fft_ls" else (None,)
        for f in factors:
            key = mode if f is None else f"{mode}@{f}"
            try:
                e = run_estimator(mode, obs, job.plan, job.pilots, sc, f or 4, job.fft_refine) - truth
            except CoopIsacError:
                out["err"][key] = None
                continue
            out["err"][key] = (float(e[:2] @ e[:2]), float(e[2:] @ e[2:]), float(e @ W @ e))
    return out


def _reduce_errors(table, sweep, key, errs, trials):
    ok = [e for e in errs if e is not None]
    failures = len(errs) - len(ok)
    arr = np.array(ok) if ok else np.full((0, 3), np.nan)
    for j, part in enumerate(("pos", "vel", "total")):
        if len(arr):
            r, ci = rmse_with_ci(arr[:, j])
            table.add(sweep, f"rmse_{part}_{key}", r, ci, len(arr))
        else:
            table.add(sweep, f"rmse_{part}_{key}", None, 0.0, 0)
    table.add(sweep, f"failures_{key}", failures, 0.0, trials)


def _reduce_bounds(table, sweep, bounds, trials):
    for name in bounds[0]:
        table.add(sweep, f"sqrt_{name}", math.sqrt(np.mean([b[name] for b in bounds])), 0.0, trials)


def default_plan(spec: ExperimentSpec, scenario: Scenario) -> AllocationPlan:
    return make_baseline(spec.plan_kind, scenario, spec.sensing_fraction, spec.seed)


def run_rmse_vs_snr(spec: ExperimentSpec, scenario: Scenario, plan: AllocationPlan | None = None, pilots=None) -> ResultTable:
    """RMSE of every estimator mode against SNR, with the matching bounds.

    SNR is set by scaling the reflection magnitudes only; the allocation and
    budgets stay fixed across points.  With ``random_target`` each trial
    draws its own target and the bound rows average the per-trial bounds.
    """
    plan = default_plan(spec, scenario) if plan is None else plan
    pilots = pilots or PilotSet.qpsk(scenario.num_tx, scenario.num_users, scenario.ofdm.shape, spec.seed)
    table = ResultTable(("snr_db",), metadata=_metadata(spec.kind, scenario, spec, modes="|".join(spec.modes)))
    for i, snr in enumerate(spec.sweep):
        sc = scenario.with_snr(float(snr))
        jobs = [
            _TrialJob(sc, plan, pilots, trial_seed(spec.seed, i, t), spec.modes, spec.random_target, (spec.fft_factor,), spec.fft_refine)
            for t in range(spec.trials)
        ]
        results = _map(_run_trial, jobs, spec.workers)
        _reduce_bounds(table, snr, [r["bounds"] for r in results], spec.trials)
        for mode in spec.modes:
            key = f"{mode}@{spec.fft_factor}" if mode == "plf_fft_ls" else mode
            _reduce_errors(table, snr, mode, [r["err"][key] for r in results], spec.trials)
    return table


def run_fft_sweep(spec: ExperimentSpec, scenario: Scenario, snr_db: float, plan=None, pilots=None) -> ResultTable:
    """FFT-LS error against the zero-padding factor, paired with ML-WLS and SLF.

    Every factor sees the same noise and targets, so the FFT-to-ML gap is a
    paired difference.  ``sweep`` holds the zero-padding factors.
    """
    plan = default_plan(spec, scenario) if plan is None else plan
    pilots = pilots or PilotSet.qpsk(scenario.num_tx, scenario.num_users, scenario.ofdm.shape, spec.seed)
    factors = tuple(int(f) for f in spec.sweep)
    sc = scenario.with_snr(float(snr_db))
    modes = tuple(dict.fromkeys(("plf_fft_ls",) + tuple(m for m in spec.modes if m != "plf_fft_ls")))
    jobs = [
        _TrialJob(sc, plan, pilots, trial_seed(spec.seed, 0, t), modes, spec.random_target, factors, spec.fft_refine)
        for t in range(spec.trials)
    ]
    results = _map(_run_trial, jobs, spec.workers)
    table = ResultTable(("fft_factor",), metadata=_metadata(spec.kind, sc, spec, snr_db=snr_db))
    for f in factors:
        _reduce_bounds(table, f, [r["bounds"] for r in results], spec.trials)
        _reduce_errors(table, f, "plf_fft_ls", [r["err"][f"plf_fft_ls@{f}"] for r in results], spec.trials)
        for mode in modes[1:]:
            _reduce_errors(table, f, mode, [r["err"][mode] for r in results], spec.trials)
        if "plf_ml_wls" in modes:
            for part in ("pos", "vel", "total"):
                gap = table.value(f"rmse_{part}_plf_fft_ls", f) - table.value(f"rmse_{part}_plf_ml_wls", f)
                table.add(f, f"gap_{part}_fft_vs_ml", gap, 0.0, spec.trials)
    return table


# ---------------------------------------------------------------------------
# FFT report covariance


def estimate_sigma_fft(
    scenario: Scenario,
    plan: AllocationPlan,
    fft_size,
    trials: int,
    seed: int = 0,
    pilots=None,
    refine: bool = False,
    about: str = "truth",
    random_target: bool = False,
) -> np.ndarray:
    """Empirical (PQ, 2, 2) error matrices of the FFT (tau, fd) reports.

    ``about='truth'`` gives the second moment of the report error, which keeps
    the deterministic grid-quantization error; ``about='mean'`` gives the
    central covariance.  With ``random_target`` every trial draws its own
    target (see :func:`trial_targets`), so the quantization error is averaged
    over sub-bin offsets instead of frozen at one.  Each block is projected
    onto the PSD cone.
    """
    if trials < 100:
        raise ValidationError("trials", "estimating a report covariance needs at least 100 trials")
    if about not in ("truth", "mean"):
        raise ValueError("about must be 'truth' or 'mean'")
    pilots = pilots or PilotSet.qpsk(scenario.num_tx, scenario.num_users, scenario.ofdm.shape, seed)
    P, Q = scenario.num_tx, scenario.num_rx
    errs = np.zeros((trials, P * Q, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in range(trials):
            ts = trial_seed(seed, 0, t)
            sc = _trial_scenario(scenario, ts, random_target)
            truth = np.array([[lk.tau_s, lk.fd_hz] for lk in fisher.link_params(sc)])
            obs = synthesize(sc, plan, pilots, ts)
            for p in range(P):
                for q in range(Q):
                    rep = estimate.plf_local_fft(obs, plan, pilots, sc, p, q, fft_size, refine)
                    errs[t, p * Q + q] = rep.zeta - truth[p * Q + q]
    out = np.zeros((P * Q, 2, 2))
    for r in range(P * Q):
        e = errs[:, r]
        if about == "mean":
            e = e - e.mean(axis=0)
        C = e.T @ e / (trials - (1 if about == "mean" else 0))
        w, V = np.linalg.eigh(0.5 * (C + C.T))
        out[r] = (V * np.maximum(w, 0.0)) @ V.T
    return out


# ---------------------------------------------------------------------------
# spatial bound maps


SYMMETRIC_TX = ((-80.0, 80.0), (80.0, -80.0))
SYMMETRIC_RX = ((80.0, 80.0), (-80.0, -80.0))
ASYMMETRIC_TX = ((-80.0, 80.0), (-40.0, -80.0))
ASYMMETRIC_RX = ((80.0, 80.0), (80.0, -20.0))


def with_deployment(scenario: Scenario, tx, rx) -> Scenario:
    dep = Deployment(np.asarray(tx, float), np.asarray(rx, float), scenario.num_users)
    if dep.num_tx != scenario.num_tx or dep.num_rx != scenario.num_rx:
        raise ValidationError("deployment", "BS counts must match the scenario")
    return dataclasses.replace(scenario, deployment=dep)


def map_lattice(half_width: float = 70.0, points: int = 21) -> tuple[np.ndarray, np.ndarray]:
    xs = np.linspace(-half_width, half_width, points)
    return xs, xs.copy()


def run_peb_map(
    scenario: Scenario,
    plan: AllocationPlan,
    xs,
    ys,
    velocity=None,
    modes=("slf", "plf_ls"),
) -> ResultTable:
    """Position-error bounds over a lattice: SLF CRB and unweighted-LS PLF.

    PLF uses the ML report covariances and the identity weight in range
    units.  Singular points are recorded as missing values.
    """
    v = scenario.target.velocity_mps if velocity is None else np.asarray(velocity, float)
    table = ResultTable(("x_m", "y_m"), metadata=_metadata(ExperimentKind.PEB_MAP, scenario, modes="|".join(modes)))
    bs = np.vstack([scenario.deployment.tx_positions, scenario.deployment.rx_positions])
    for x in xs:
        for y in ys:
            u = np.array([x, y], dtype=float)
            vals = {}
            if np.min(np.linalg.norm(bs - u, axis=1)) > 1e-9:
                t = TargetState(u, v)
                try:
                    if "slf" in modes:
                        vals["slf"] = math.sqrt(fisher.slf_crb(scenario, plan, t).position_bound)
                    if "plf_ls" in modes:
                        sig = fisher.sigma_ml_blocks(scenario, plan, t)
                        vals["plf_ls"] = math.sqrt(fisher.ts_crb(scenario, sig, "identity", t).position_bound)
                    if "plf_wls" in modes:
                        sig = fisher.sigma_ml_blocks(scenario, plan, t)
                        vals["plf_wls"] = math.sqrt(fisher.ts_crb(scenario, sig, "inverse", t).position_bound)
                except CoopIsacError:
                    vals = {}
            for m in modes:
                table.add((x, y), f"peb_{m}", vals.get(m))
            if "slf" in vals and "plf_ls" in vals:
                table.add((x, y), "rel_gap_plf_ls", (vals["plf_ls"] ** 2 - vals["slf"] ** 2) / vals["slf"] ** 2)
            elif "slf" in modes and "plf_ls" in modes:
                table.add((x, y), "rel_gap_plf_ls", None)
    return table


def write_heatmap(table: ResultTable, metric: str, path) -> Path:
    """Matrix-shaped CSV of one map metric (blank cells for missing values)."""
    pts, vals = table.series(metric)
    xs = np.unique(pts[:, 0])
    ys = np.unique(pts[:, 1])
    grid = {(a, b): v for (a, b), v in zip(map(tuple, pts), vals)}
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# metric={metric}\n# rows=y_m columns=x_m\n")
        w = csv.writer(fh)
        w.writerow(["y\\x"] + [repr(float(x)) for x in xs])
        for y in ys:
            row = [grid.get((x, y), np.nan) for x in xs]
            w.writerow([repr(float(y))] + ["" if not np.isfinite(v) else repr(float(v)) for v in row])
    return path


# ---------------------------------------------------------------------------
# allocation experiments


def _proposed(scenario, opts=None, num_random=10, seed=0, use_sidelobe=True):
    from coopisac.optimize.algorithm import SolverOptions, run_algorithm1
    from coopisac.optimize.baselines import baseline_suite, best_baseline

    opts = opts or SolverOptions()
    opts = dataclasses.replace(opts, use_sidelobe=use_sidelobe)
    suite = baseline_suite(scenario, num_random=num_random, seed=seed, use_sidelobe=use_sidelobe)
    best = best_baseline(suite)
    if best is None:
        raise CoopIsacError("no feasible baseline to start from")
    plan, trace = run_algorithm1(scenario, best.plan, opts)
    return plan, trace, suite


def run_rate_tradeoff(spec: ExperimentSpec, scenario: Scenario, out_dir=None, opts=None) -> ResultTable:
    """Weighted CRB of the proposed design and the baselines against eta0."""
    from coopisac.optimize.baselines import feasible_baseline

    table = ResultTable(("eta0_bpshz",), metadata=_metadata(spec.kind, scenario, spec))
    for eta in spec.sweep:
        sc = dataclasses.replace(scenario, rate_threshold_bpshz=float(eta))
        try:
            plan, trace, _ = _proposed(sc, opts, spec.num_random, spec.seed)
            table.add(eta, "crb_proposed", trace.final_crb)
            table.add(eta, "integrality_gap", trace.integrality_gap)
            if out_dir is not None:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                np.savetxt(out / f"pattern_eta{float(eta):g}.csv", _pattern_rows(plan), delimiter=",", fmt="%d")
        except CoopIsacError:
            table.add(eta, "crb_proposed", None)
        for kind in spec.baselines:
            r = feasible_baseline(kind, sc, spec.seed)
            table.add(eta, f"crb_{kind}", None if r is None else r.crb)
    return table


def _pattern_rows(plan: AllocationPlan) -> np.ndarray:
    """Role map flattened to (subcarrier, symbol, role) rows; roles as in :func:`role_map`."""
    roles = role_map(plan)
    n, m = np.indices(roles.shape)
    return np.stack([n.ravel(), m.ravel(), roles.ravel()], axis=1)


def run_sidelobe_sweep(spec: ExperimentSpec, scenario: Scenario, opts=None) -> ResultTable:
    """Weighted CRB against the sidelobe threshold (``sweep`` in dB)."""
    from coopisac.optimize.baselines import feasible_baseline

    table = ResultTable(("beta0_db",), metadata=_metadata(spec.kind, scenario, spec))
    try:
        _, free, _ = _proposed(scenario, opts, spec.num_random, spec.seed, use_sidelobe=False)
        unconstrained = free.final_crb
    except CoopIsacError:
        unconstrained = None
    for db in spec.sweep:
        sl = scenario.sidelobe
        sc = dataclasses.replace(scenario, sidelobe=SidelobeSpec(float(db_to_amplitude(db)), sl.l_max, sl.nu_max))
        try:
            _, trace, _ = _proposed(sc, opts, spec.num_random, spec.seed)
            table.add(db, "crb_proposed", trace.final_crb)
        except CoopIsacError:
            table.add(db, "crb_proposed", None)
        table.add(db, "crb_proposed_unconstrained", unconstrained)
        for kind in spec.baselines:
            r = feasible_baseline(kind, sc, spec.seed)
            table.add(db, f"crb_{kind}", None if r is None else r.crb)
    return table


def run_experiment(spec: ExperimentSpec, scenario: Scenario, **kw) -> ResultTable:
    kind = spec.kind
    if kind is ExperimentKind.RMSE_VS_SNR:
        return run_rmse_vs_snr(spec, scenario, **kw)
    if kind is ExperimentKind.FFT_SWEEP:
        return run_fft_sweep(spec, scenario, kw.pop("snr_db", 30.0), **kw)
    if kind is ExperimentKind.RATE_TRADEOFF:
        return run_rate_tradeoff(spec, scenario, **kw)
    if kind is ExperimentKind.SIDELOBE_SWEEP:
        return run_sidelobe_sweep(spec, scenario, **kw)
    if kind is ExperimentKind.PEB_MAP:
        xs, ys = map_lattice()
        plan = kw.pop("plan", None) or default_plan(spec, scenario)
        return run_peb_map(scenario, plan, xs, ys, **kw)
    if kind is ExperimentKind.SIGMA_FFT_ESTIMATION:
        plan = kw.pop("plan", None) or default_plan(spec, scenario)
        N, M = scenario.ofdm.shape
        table = ResultTable(("fft_factor",), metadata=_metadata(kind, scenario, spec))
        for f in spec.sweep:
            sig = estimate_sigma_fft(scenario, plan, (int(f) * N, int(f) * M), spec.trials, spec.seed)
            ts = fisher.ts_crb(scenario, sig, "inverse").ts_crb
            table.add(f, "tscrb_fft", ts, 0.0, spec.trials)
            table.add(f, "crb_slf", fisher.slf_crb(scenario, plan).crb_weighted)
        return table
    raise ValueError(f"unsupported experiment kind {kind}")
