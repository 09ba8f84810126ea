import json
from pathlib import Path

import numpy as np
import pytest

from coopisac import fisher
from coopisac.cli import build_parser, dispatch
from coopisac.grid import make_baseline, write_plan_csv
from coopisac.scenario import desk_scenario

ROOT = Path(__file__).resolve().parents[1]
DESK = str(ROOT / "scenarios" / "desk.yaml")
OPT = str(ROOT / "scenarios" / "optimizer_desk.yaml")


def run(capsys, *argv):
    code = dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_crb_matches_library(capsys, tmp_path):
    code, out, _ = run(capsys, "crb", "--scenario", DESK, "--out", tmp_path)
    assert code == 0
    sc = desk_scenario()
    assert float(out) == pytest.approx(fisher.weighted_crb(sc, make_baseline("tdb", sc, 1.0)), rel=1e-12)
    F = np.loadtxt(tmp_path / "F_eta.csv", delimiter=",")
    assert F.shape == (16, 16)


def test_crb_is_deterministic(capsys, tmp_path):
    a = run(capsys, "crb", "--scenario", DESK, "--plan", "fdi", "--out", tmp_path)[1]
    b = run(capsys, "crb", "--scenario", DESK, "--plan", "fdi", "--out", tmp_path)[1]
    assert a == b


def test_set_override_changes_result(capsys, tmp_path):
    base = float(run(capsys, "crb", "--scenario", DESK, "--out", tmp_path)[1])
    hi = float(run(capsys, "crb", "--scenario", DESK, "--set", "sensing.snr_db=30", "--out", tmp_path)[1])
    assert hi == pytest.approx(base / 10, rel=1e-9)


def test_plan_from_csv(capsys, tmp_path):
    sc = desk_scenario()
    plan = make_baseline("tdi", sc, 0.5)
    path = write_plan_csv(plan, tmp_path / "plan.csv")
    code, out, _ = run(capsys, "crb", "--scenario", DESK, "--plan", path, "--out", tmp_path)
    assert code == 0 and float(out) == pytest.approx(fisher.weighted_crb(sc, plan), rel=1e-12)


def test_tscrb_ml_equals_crb(capsys, tmp_path):
    crb = float(run(capsys, "crb", "--scenario", DESK, "--out", tmp_path)[1])
    ts = float(run(capsys, "tscrb", "--scenario", DESK, "--out", tmp_path)[1])
    assert ts == pytest.approx(crb, rel=1e-8)


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", "--scenario", DESK)
    assert code == 0 and json.loads(out)["scenario"] == "ok"


def test_missing_scenario_is_parse_error(capsys, tmp_path):
    code, _, err = run(capsys, "crb", "--scenario", tmp_path / "none.yaml")
    assert code == 2 and json.loads(err)["error"] == "ParseError"


def test_missing_plan_is_parse_error(capsys, tmp_path):
    code, _, err = run(capsys, "crb", "--scenario", DESK, "--plan", tmp_path / "none.csv")
    assert code == 2 and json.loads(err)["error"] == "ParseError"


def test_invalid_value_is_validation_error(capsys):
    code, _, err = run(capsys, "crb", "--scenario", DESK, "--set", "budgets.per_re_w=-1")
    assert code == 2


def test_too_few_fft_trials(capsys, tmp_path):
    code, _, err = run(capsys, "tscrb", "--scenario", DESK, "--mode", "fft", "--trials", "5", "--out", tmp_path)
    assert code == 2 and "trials" in err


def test_usage_errors(capsys):
    assert run(capsys, "crb")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_infeasible_rate_reports_constraint(capsys, tmp_path):
    code, _, err = run(capsys, "optimize", "--scenario", OPT, "--set", "rate_threshold_bpshz=100", "--out", tmp_path)
    assert code == 3
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["error"] == "Infeasible" and "rate" in msg["constraints"]


def test_ambiguity_report(capsys, tmp_path):
    code, out, _ = run(capsys, "ambiguity", "--scenario", DESK, "--tx", "0", "--out", tmp_path)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 1
    rep = json.loads(lines[0])
    assert rep["tx"] == 0 and rep["peak_abs"] >= 0
    assert (tmp_path / "ambiguity_tx0.csv").exists() and not (tmp_path / "ambiguity_tx1.csv").exists()
    assert run(capsys, "ambiguity", "--scenario", DESK, "--tx", "5", "--out", tmp_path)[0] == 2


def test_map_writes_heatmaps(capsys, tmp_path):
    code, _, _ = run(capsys, "map", "--scenario", DESK, "--points", "3", "--out", tmp_path)
    assert code == 0
    for name in ("peb_slf.csv", "peb_plf_ls.csv", "rel_gap_plf_ls.csv", "peb_map.csv"):
        assert (tmp_path / name).exists()


def test_help_states_units():
    text = build_parser()._subparsers._group_actions[0].choices["simulate"].format_help()
    assert "(dB)" in text and "(count)" in text
