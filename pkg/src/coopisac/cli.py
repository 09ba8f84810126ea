"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 invalid scenario or plan,
3 infeasible optimization, 4 any other numerical failure.  Errors are
reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from coopisac import fisher, montecarlo
from coopisac.ambiguity import check_sidelobes, surface_export
from coopisac.errors import CoopIsacError, Infeasible, ParseError, ValidationError
from coopisac.grid import PatternKind, make_baseline, read_plan_csv, validate, write_mask_pgm, write_plan_csv
from coopisac.scenario import apply_overrides, scenario_from_dict

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_FAILURE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError as exc:
        raise UsageError(f"expected a range 'lo:hi', got {text!r}") from exc


def load(args):
    """Scenario from ``--scenario`` with ``--seed`` and ``--set`` overrides applied."""
    try:
        tree = yaml.safe_load(Path(args.scenario).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {args.scenario}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"{args.scenario}: {exc}") from exc
    if not isinstance(tree, dict):
        raise ParseError("scenario document must be a mapping")
    if args.seed is not None:
        tree["seed"] = args.seed
    apply_overrides(tree, args.set or [])
    return scenario_from_dict(tree)


def resolve_plan(args, scenario):
    """``--plan`` is a baseline kind (tdb, fdb, tdi, fdi, random) or a plan CSV."""
    spec = args.plan
    kinds = {k.value for k in PatternKind} - {"custom"}
    if spec in kinds:
        return make_baseline(spec, scenario, args.fraction, scenario.seed)
    try:
        plan = read_plan_csv(spec, scenario.num_tx, scenario.num_users, scenario.ofdm.shape)
    except OSError as exc:
        raise ParseError(f"--plan {spec!r} is neither a baseline kind nor a readable plan CSV: {exc}") from exc
    problems = validate(plan, scenario)
    if problems:
        raise ValidationError("plan", "; ".join(problems))
    return plan


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    sc = load(args)
    msg = {"scenario": "ok", "num_tx": sc.num_tx, "num_rx": sc.num_rx, "num_users": sc.num_users}
    if args.plan:
        resolve_plan(args, sc)
        msg["plan"] = "ok"
    print(json.dumps(msg))
    return EXIT_OK


def cmd_crb(args) -> int:
    sc = load(args)
    plan = resolve_plan(args, sc)
    rep = fisher.slf_crb(sc, plan)
    rep.write_csv(_out(args))
    print(f"{rep.crb_weighted!r}")
    print(rep.summary_line(), file=sys.stderr)
    return EXIT_OK


def cmd_tscrb(args) -> int:
    sc = load(args)
    plan = resolve_plan(args, sc)
    if args.mode == "ml":
        sigma = fisher.sigma_ml_blocks(sc, plan)
        mode = fisher.TsMode.ML
    else:
        N, M = sc.ofdm.shape
        sigma = montecarlo.estimate_sigma_fft(sc, plan, (args.fft_factor * N, args.fft_factor * M), args.trials, sc.seed)
        mode = fisher.TsMode.FFT
    weight = "inverse" if args.weight == "wls" else "identity"
    rep = fisher.ts_crb(sc, sigma, weight, mode=mode)
    rep.write_csv(_out(args))
    print(f"{rep.ts_crb!r}")
    return EXIT_OK


def cmd_ambiguity(args) -> int:
    sc = load(args)
    plan = resolve_plan(args, sc)
    out = _out(args)
    l_rng = _range(args.l_range) if args.l_range else (-sc.sidelobe.l_max, sc.sidelobe.l_max)
    nu_rng = _range(args.nu_range) if args.nu_range else (-sc.sidelobe.nu_max, sc.sidelobe.nu_max)
    if args.tx is not None and not 0 <= args.tx < sc.num_tx:
        raise ValidationError("tx", f"must be in [0, {sc.num_tx - 1}]")
    txs = range(sc.num_tx) if args.tx is None else [args.tx]
    for p in txs:
        surface_export(plan, p, l_rng, nu_rng).write_csv(out / f"ambiguity_tx{p}.csv")
    reports = check_sidelobes(plan, sc)
    for r in (r for r in reports if r.p in txs):
        print(json.dumps({"tx": r.p, "peak_abs": r.peak_abs, "argmax": r.argmax, "mainlobe": r.mainlobe, "satisfied": r.satisfied}))
    return EXIT_OK


def cmd_optimize(args) -> int:
    from coopisac.optimize.algorithm import SolverOptions, run_algorithm1
    from coopisac.optimize.baselines import baseline_suite, best_baseline

    sc = load(args)
    use_rate, use_sl = not args.no_rate, not args.no_sidelobe
    opts = SolverOptions(
        max_outer_iters=args.max_iters,
        outer_tol=args.outer_tol,
        rho1=args.rho1,
        use_rate=use_rate,
        use_sidelobe=use_sl,
    )
    if args.plan:
        init = resolve_plan(args, sc)
    else:
        best = best_baseline(baseline_suite(sc, num_random=args.num_random, seed=sc.seed, use_rate=use_rate, use_sidelobe=use_sl))
        init = best.plan if best is not None else make_baseline("tdb", sc, 0.5)
    plan, trace = run_algorithm1(sc, init, opts)
    out = _out(args)
    write_plan_csv(plan, out / "plan.csv")
    write_mask_pgm(plan, out / "plan_roles.pgm")
    trace.write_csv(out / "trace.csv")
    print(f"{trace.final_crb!r}")
    print(
        json.dumps({"final_crb": trace.final_crb, "relaxed_crb": trace.relaxed_crb, "integrality_gap": trace.integrality_gap,
                    "used_fallback": trace.used_fallback}),
        file=sys.stderr,
    )
    return EXIT_OK


def _spec(args, kind, sweep):
    return montecarlo.ExperimentSpec(
        kind,
        sweep,
        trials=args.trials,
        modes=tuple(args.modes.split(",")) if getattr(args, "modes", None) else ("slf", "plf_ml_wls", "plf_fft_ls"),
        baselines=tuple(args.baselines.split(",")) if getattr(args, "baselines", None) else ("tdb", "fdb"),
        seed=args.seed if args.seed is not None else 0,
        plan_kind=getattr(args, "plan", None) or "tdb",
        sensing_fraction=getattr(args, "fraction", 1.0),
        random_target=not getattr(args, "fixed_target", False),
        fft_factor=getattr(args, "fft_factor", 4),
        num_random=getattr(args, "num_random", 10),
        workers=getattr(args, "workers", 1),
    )


def _finish(table, out: Path, name: str, extra=()) -> None:
    path = table.write_csv(out / name)
    montecarlo.write_manifest(out / "manifest.yaml", table, [path, *extra])
    print(str(path))


def cmd_simulate(args) -> int:
    sc = load(args)
    out = _out(args)
    if args.kind == "rmse_vs_snr":
        spec = _spec(args, args.kind, _floats(args.sweep or "0,5,10,15,20"))
        table = montecarlo.run_rmse_vs_snr(spec, sc)
    elif args.kind == "fft_sweep":
        spec = _spec(args, args.kind, _floats(args.sweep or "1,2,4,8"))
        table = montecarlo.run_fft_sweep(spec, sc, args.snr_db)
    elif args.kind == "sigma_fft_estimation":
        spec = _spec(args, args.kind, _floats(args.sweep or "1,2,4,8"))
        table = montecarlo.run_experiment(spec, sc.with_snr(args.snr_db))
    else:
        raise UsageError(f"unknown simulation kind {args.kind}")
    _finish(table, out, f"{args.kind}.csv")
    return EXIT_OK


def cmd_map(args) -> int:
    sc = load(args)
    if args.deployment == "symmetric":
        sc = montecarlo.with_deployment(sc, montecarlo.SYMMETRIC_TX, montecarlo.SYMMETRIC_RX)
    elif args.deployment == "asymmetric":
        sc = montecarlo.with_deployment(sc, montecarlo.ASYMMETRIC_TX, montecarlo.ASYMMETRIC_RX)
    plan = resolve_plan(args, sc)
    xs, ys = montecarlo.map_lattice(args.half_width, args.points)
    vel = None if args.velocity is None else _floats(args.velocity)
    table = montecarlo.run_peb_map(sc, plan, xs, ys, velocity=vel)
    out = _out(args)
    heat = [montecarlo.write_heatmap(table, m, out / f"{m}.csv") for m in ("peb_slf", "peb_plf_ls", "rel_gap_plf_ls")]
    _finish(table, out, "peb_map.csv", heat)
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    sc = load(args)
    out = _out(args)
    if args.kind == "rate":
        spec = _spec(args, "rate_tradeoff", _floats(args.sweep or "0,1,2,3"))
        table = montecarlo.run_rate_tradeoff(spec, sc, out_dir=out)
    else:
        spec = _spec(args, "sidelobe_sweep", _floats(args.sweep or "-14,-12,-10,-8,-6"))
        table = montecarlo.run_sidelobe_sweep(spec, sc)
    _finish(table, out, f"tradeoff_{args.kind}.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coopisac", description="Cooperative OFDM-ISAC bounds, estimators and resource allocation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, plan=True, out=True):
        p.add_argument("--scenario", required=True, help="scenario file (YAML, SI units: Hz, s, m, W or dBm)")
        p.add_argument("--seed", type=int, default=None, help="64-bit seed overriding the scenario seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario field, e.g. sensing.snr_db=30 (repeatable)")
        if plan:
            p.add_argument("--plan", default=None if plan == "optional" else "tdb",
                           help="baseline kind (tdb, fdb, tdi, fdi, random) or plan CSV path")
            p.add_argument("--fraction", type=float, default=1.0, help="sensing fraction of a baseline plan, in (0, 1]")
        if out:
            p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("validate", help="check a scenario file (and optionally a plan)")
    common(p, plan="optional", out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("crb", help="weighted SLF CRB of a plan; writes fisher_report.csv")
    common(p)
    p.set_defaults(func=cmd_crb)

    p = sub.add_parser("tscrb", help="two-stage PLF bound; writes tscrb_report.csv")
    common(p)
    p.add_argument("--mode", choices=("ml", "fft"), default="ml", help="local report model")
    p.add_argument("--weight", choices=("wls", "ls"), default="wls", help="fusion weight (inverse covariance or identity in range units)")
    p.add_argument("--fft-factor", type=int, default=4, help="zero-padding factor per axis for --mode fft (count)")
    p.add_argument("--trials", type=int, default=200, help="Monte-Carlo trials for --mode fft (count)")
    p.set_defaults(func=cmd_tscrb)

    p = sub.add_parser("ambiguity", help="sidelobe check and |Gamma| surface export (dB re mainlobe)")
    common(p)
    p.add_argument("--tx", type=int, default=None, help="Tx index (default: all)")
    p.add_argument("--l-range", default=None, help="delay bins lo:hi (default: sidelobe window)")
    p.add_argument("--nu-range", default=None, help="Doppler bins lo:hi (default: sidelobe window)")
    p.set_defaults(func=cmd_ambiguity)

    p = sub.add_parser("optimize", help="joint RE selection and power allocation")
    common(p, plan="optional")
    p.add_argument("--max-iters", type=int, default=15, help="outer iterations (count)")
    p.add_argument("--outer-tol", type=float, default=1e-4, help="relative objective change for convergence")
    p.add_argument("--rho1", type=float, default=None, help="binary penalty weight (CRB units; default 1e-3 x initial CRB)")
    p.add_argument("--num-random", type=int, default=10, help="random plans tried when picking the initial plan (count)")
    p.add_argument("--no-rate", action="store_true", help="drop the sum-rate constraint")
    p.add_argument("--no-sidelobe", action="store_true", help="drop the sidelobe constraint")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte-Carlo estimator experiments")
    common(p)
    p.add_argument("--kind", choices=("rmse_vs_snr", "fft_sweep", "sigma_fft_estimation"), default="rmse_vs_snr")
    p.add_argument("--sweep", default=None, help="comma-separated sweep values (SNR in dB, or FFT factors)")
    p.add_argument("--trials", type=int, default=200, help="trials per point (count)")
    p.add_argument("--modes", default=None, help="estimators: slf, plf_ml_wls, plf_ml_ls, plf_fft_ls")
    p.add_argument("--fft-factor", type=int, default=4, help="zero-padding factor of the FFT mode (count)")
    p.add_argument("--snr-db", type=float, default=30.0, help="average SNR of FFT sweeps (dB)")
    p.add_argument("--fixed-target", action="store_true", help="keep the scenario target instead of drawing one per trial")
    p.add_argument("--workers", type=int, default=1, help="worker processes (count)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("map", help="SLF vs unweighted PLF position-bound maps")
    common(p)
    p.add_argument("--deployment", choices=("scenario", "symmetric", "asymmetric"), default="scenario")
    p.add_argument("--points", type=int, default=21, help="lattice points per axis (count)")
    p.add_argument("--half-width", type=float, default=70.0, help="lattice half-width (m)")
    p.add_argument("--velocity", default=None, help="target velocity vx,vy for the map (m/s)")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("tradeoff", help="CRB versus sum-rate target or sidelobe threshold")
    common(p, plan=False)
    p.add_argument("--kind", choices=("rate", "sidelobe"), default="rate")
    p.add_argument("--sweep", default=None, help="eta0 values (bps/Hz) or beta0 values (dB)")
    p.add_argument("--baselines", default=None, help="baseline kinds to compare, e.g. tdb,fdb")
    p.add_argument("--num-random", type=int, default=10, help="random plans tried for the initial plan (count)")
    p.add_argument("--trials", type=int, default=1, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_tradeoff)
    return parser


def _report(kind: str, exc: BaseException, **extra) -> None:
    payload = {"error": kind, "message": str(exc)}
    payload.update(extra)
    print(json.dumps(payload, default=str), file=sys.stderr)


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _report("usage", exc)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        _report(type(exc).__name__, exc)
        return EXIT_INVALID
    except Infeasible as exc:
        _report("Infeasible", exc, constraints=list(getattr(exc, "constraints", ()) or ()), stage=getattr(exc, "stage", None))
        return EXIT_INFEASIBLE
    except CoopIsacError as exc:
        _report(type(exc).__name__, exc)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
