import copy
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from coopisac.errors import ParseError, ValidationError
from coopisac.scenario import (
    SPEED_OF_LIGHT,
    TargetState,
    apply_overrides,
    average_snr_db,
    draw_target,
    dump_scenario,
    link_geometry,
    load_scenario,
    pathloss,
    scenario_from_dict,
    scenario_to_dict,
    table2_tree,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def test_bundled_scenarios_parse():
    files = sorted(SCENARIOS.glob("*.yaml"))
    assert {f.name for f in files} >= {"table2.yaml", "desk.yaml", "optimizer_desk.yaml"}
    for f in files:
        sc = load_scenario(f)
        assert sc.num_tx == 2 and sc.num_rx == 2


def test_table2_parameters():
    sc = scenario_from_dict(table2_tree())
    assert sc.ofdm.shape == (128, 64)
    assert sc.ofdm.wavelength_m == pytest.approx(SPEED_OF_LIGHT / 24e9)
    assert sc.sidelobe.beta0_db == pytest.approx(-10.0)
    assert (sc.sidelobe.l_max, sc.sidelobe.nu_max) == (32, 12)
    assert np.allclose(sc.budgets, 128 * 64)
    assert sc.comm.noise_power_w == pytest.approx(1e-11)


def test_dump_round_trip(tmp_path, desk):
    path = tmp_path / "s.yaml"
    dump_scenario(desk, path)
    back = load_scenario(path)
    assert np.allclose(back.reflections, desk.reflections)
    assert np.allclose(back.budgets, desk.budgets)
    assert np.allclose(back.comm.gains, desk.comm.gains)
    assert back.seed == desk.seed
    assert scenario_to_dict(back) == scenario_to_dict(desk)


def test_same_seed_same_realization(desk_tree):
    a = scenario_from_dict(copy.deepcopy(desk_tree))
    b = scenario_from_dict(copy.deepcopy(desk_tree))
    c = scenario_from_dict(dict(copy.deepcopy(desk_tree), seed=5))
    assert np.array_equal(a.comm.gains, b.comm.gains)
    assert np.array_equal(a.reflections, b.reflections)
    assert not np.array_equal(a.comm.gains, c.comm.gains)


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda t: t.pop("ofdm"), ParseError),
        (lambda t: t["ofdm"].update(num_subcarriers="many"), ParseError),
        (lambda t: t["ofdm"].update(num_subcarriers=1), ValidationError),
        (lambda t: t["sidelobe"].update(beta0_db=0.0), ValidationError),
        (lambda t: t["sidelobe"].update(l_max=32), ValidationError),
        (lambda t: t.update(rate_threshold_bpshz=-1.0), ValidationError),
        (lambda t: t["deployment"].update(num_users=3), ValidationError),
        (lambda t: t["budgets"].update(per_re_w=0.0), ValidationError),
    ],
)
def test_invalid_trees(desk_tree, mutate, error):
    tree = copy.deepcopy(desk_tree)
    mutate(tree)
    with pytest.raises(error):
        scenario_from_dict(tree)


def test_non_mapping_document():
    with pytest.raises(ParseError):
        scenario_from_dict([1, 2, 3])


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("ofdm: [unclosed\n")
    with pytest.raises(ParseError):
        load_scenario(bad)


def test_overrides(desk_tree):
    tree = apply_overrides(copy.deepcopy(desk_tree), ["sensing.snr_db=30", "seed=7", "sidelobe.beta0_db=-12.5"])
    assert tree["sensing"]["snr_db"] == 30 and tree["seed"] == 7
    sc = scenario_from_dict(tree)
    assert sc.sidelobe.beta0_db == pytest.approx(-12.5)
    with pytest.raises(ParseError):
        apply_overrides(tree, ["no_equals_sign"])


@settings(max_examples=20, deadline=None)
@given(st.floats(-10, 40))
def test_with_snr_hits_target(snr):
    sc = scenario_from_dict(table2_tree(16, 8))
    assert average_snr_db(sc.with_snr(snr)) == pytest.approx(snr, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(-60, 60), st.floats(-60, 60), st.floats(-20, 20), st.floats(-20, 20))
def test_bistatic_delay_and_doppler(x, y, vx, vy):
    sc = scenario_from_dict(table2_tree(16, 8))
    u, v = np.array([x, y]), np.array([vx, vy])
    geo = link_geometry(sc, TargetState(u, v))
    for p, tx in enumerate(sc.deployment.tx_positions):
        for q, rx in enumerate(sc.deployment.rx_positions):
            d1, d2 = np.linalg.norm(u - tx), np.linalg.norm(u - rx)
            assert geo.tau_s[p, q] == pytest.approx((d1 + d2) / SPEED_OF_LIGHT, rel=1e-12)
            rate = v @ (u - tx) / d1 + v @ (u - rx) / d2
            assert geo.fd_hz[p, q] == pytest.approx(rate / sc.ofdm.wavelength_m, rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_draw_target_box(seed):
    u, v = draw_target(seed)
    assert 35 <= u[0] <= 45 and 30 <= u[1] <= 40
    assert np.all((10 <= v) & (v <= 20))


def test_pathloss_decreasing():
    d = np.array([1.0, 10.0, 100.0])
    g = pathloss(d, -30.0, 2.4)
    assert np.all(np.diff(g) < 0)
    assert g[1] / g[2] == pytest.approx(10**2.4)


def test_yaml_is_plain_text():
    doc = yaml.safe_load((SCENARIOS / "desk.yaml").read_text())
    assert doc["ofdm"]["num_subcarriers"] == 32
