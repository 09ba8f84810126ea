import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopisac import montecarlo as mc
from coopisac.errors import ValidationError
from coopisac.grid import make_baseline


def test_result_table_csv_round_trip(tmp_path):
    t = mc.ResultTable(("snr_db",), metadata={"seed": 3})
    t.add(0.0, "rmse_total_slf", 1.25, 0.1, 100)
    t.add(5.0, "rmse_total_slf", None)
    t.add(5.0, "failures_slf", 2, 0.0, 100)
    back = mc.ResultTable.read_csv(t.write_csv(tmp_path / "r.csv"))
    assert back.rows == t.rows
    assert back.metadata == {"seed": "3"}
    assert math.isnan(back.value("rmse_total_slf", 5.0))


def test_result_table_rejects_bad_rows():
    t = mc.ResultTable(("snr_db",))
    t.rows.append(mc.ResultRow((0.0,), "x", 1.0, 0.5, 0))
    with pytest.raises(ValidationError):
        t.validate()
    t = mc.ResultTable(("a", "b"))
    t.add(1.0, "x", 1.0)
    with pytest.raises(ValidationError):
        t.validate()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 400), st.integers(0, 10_000))
def test_rmse_with_ci(n, seed):
    e = np.random.default_rng(seed).exponential(2.0, n)
    r, ci = mc.rmse_with_ci(e)
    assert r == pytest.approx(np.sqrt(e.mean()))
    # delta method: d sqrt(m) = dm / (2 sqrt(m))
    se = e.std(ddof=1) / np.sqrt(n)
    assert ci == pytest.approx(1.959963984540054 * se / (2 * r), rel=1e-6)


def test_rmse_ci_covers_truth():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(400):
        r, ci = mc.rmse_with_ci(rng.standard_normal(300) ** 2)
        hits += abs(r - 1.0) <= ci
    assert 0.92 <= hits / 400 <= 0.98


def test_trial_seed_deterministic_and_distinct():
    seeds = {mc.trial_seed(1, p, t) for p in range(3) for t in range(50)}
    assert len(seeds) == 150
    assert mc.trial_seed(1, 2, 3) == mc.trial_seed(1, 2, 3)


def test_spec_validation():
    with pytest.raises(ValidationError):
        mc.ExperimentSpec("rmse_vs_snr", (), trials=10)
    with pytest.raises(ValidationError):
        mc.ExperimentSpec("rmse_vs_snr", (10,), modes=("nope",))
    with pytest.raises(ValueError):
        mc.ExperimentSpec("no_such_kind", (10,))


def test_rmse_vs_snr_is_reproducible(small):
    spec = mc.ExperimentSpec("rmse_vs_snr", (20.0,), trials=4, modes=("plf_ml_wls",), seed=2)
    a = mc.run_rmse_vs_snr(spec, small)
    b = mc.run_rmse_vs_snr(spec, small)
    assert a.rows == b.rows
    assert {"rmse_total_plf_ml_wls", "sqrt_crb_total", "failures_plf_ml_wls"} <= set(a.metrics())
    assert a.value("rmse_pos_plf_ml_wls", 20.0) > 0


def test_sigma_fft_needs_enough_trials(small):
    plan = make_baseline("tdb", small, 1.0)
    with pytest.raises(ValidationError):
        mc.estimate_sigma_fft(small, plan, (16, 8), trials=10)


def test_trial_targets_follow_seed(desk):
    a = mc.trial_targets(desk, 4, 3)
    b = mc.trial_targets(desk, 4, 3)
    assert [s.target.state.tolist() for s in a] == [s.target.state.tolist() for s in b]
    assert len({tuple(s.target.state) for s in a}) == 3


def test_peb_map_and_heatmap(desk, tdb_plan, tmp_path):
    bs = desk.deployment.tx_positions[0]
    xs = np.array([bs[0], bs[0] + 20.0])
    ys = np.array([bs[1], bs[1] + 15.0])
    t = mc.run_peb_map(desk, tdb_plan, xs, ys)
    assert math.isnan(t.value("peb_slf", (bs[0], bs[1])))
    _, slf = t.series("peb_slf")
    _, plf = t.series("peb_plf_ls")
    ok = np.isfinite(slf)
    assert ok.sum() == 3 and np.all(plf[ok] >= slf[ok] * (1 - 1e-9))
    text = mc.write_heatmap(t, "peb_slf", tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == "# metric=peb_slf"
    assert len(text) == 2 + 1 + len(ys)
    assert text[3].split(",")[1] == ""


def test_with_deployment_checks_counts(desk):
    with pytest.raises(ValidationError):
        mc.with_deployment(desk, [[0.0, 0.0]], desk.deployment.rx_positions)
