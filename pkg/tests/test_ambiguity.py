import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coopisac.ambiguity import (
    CLAMP_DB,
    SidelobeLattice,
    check_sidelobes,
    full_surface,
    gamma,
    gamma_grid,
    gamma_matrix,
    gamma_vectorized,
    peak_sidelobe,
    surface_export,
)
from coopisac.errors import ZeroMainlobe
from coopisac.grid import AllocationPlan, empty_plan, make_baseline, vec

grids = arrays(np.float64, (8, 4), elements=st.floats(0, 10, allow_nan=False))


@settings(max_examples=40, deadline=None)
@given(grids, st.integers(-7, 7), st.integers(-3, 3))
def test_gamma_forms_agree(eff, l, nu):
    surf = full_surface(eff)
    direct = gamma_grid(eff, l, nu)
    assert surf[l % 8, nu % 4] == pytest.approx(direct, abs=1e-9)
    row = gamma_matrix(np.array([[l, nu]]), (8, 4))[0]
    assert row @ vec(eff) == pytest.approx(direct, abs=1e-9)
    # conjugate symmetry of a real pattern
    assert gamma_grid(eff, -l, -nu) == pytest.approx(np.conj(direct), abs=1e-9)
    # periodic in the bin indices
    assert gamma_grid(eff, l + 8, nu - 4) == pytest.approx(direct, abs=1e-9)


def test_vectorized_kernel_matches(small):
    plan = make_baseline("random", small, 0.5, seed=2)
    for l, nu in [(1, 0), (0, 1), (-3, 2)]:
        assert gamma_vectorized(plan, 0, l, nu, small.ofdm) == pytest.approx(gamma(plan, 0, l, nu), abs=1e-9)


def test_mainlobe_is_mean_power(small):
    plan = make_baseline("tdb", small, 1.0)
    eff = plan.effective_sensing_power(0)
    assert gamma(plan, 0, 0, 0).real == pytest.approx(eff.mean())


def test_full_grid_uniform_has_no_sidelobes(small):
    plan = AllocationPlan(np.stack([np.ones((8, 4)), np.zeros((8, 4))]), np.zeros((2, 2, 8, 4)), np.ones((2, 8, 4)))
    reps = check_sidelobes(plan, small)
    assert reps[0].peak_abs == pytest.approx(0.0, abs=1e-12)
    assert reps[1].peak_abs == 0.0 and reps[1].satisfied


def test_peak_matches_brute_force(small):
    plan = make_baseline("random", small, 0.6, seed=4)
    lat = SidelobeLattice(small.sidelobe.l_max, small.sidelobe.nu_max)
    for rep in check_sidelobes(plan, small):
        eff = plan.effective_sensing_power(rep.p)
        brute = max(abs(gamma_grid(eff, l, nu)) for l, nu in lat.offsets())
        assert rep.peak_abs == pytest.approx(brute)
    assert peak_sidelobe(plan, small) == max(r.peak_abs for r in check_sidelobes(plan, small))


def test_lattice_offsets():
    lat = SidelobeLattice(2, 1)
    assert len(lat.offsets()) == lat.size == 14
    half = lat.offsets(half=True)
    assert len(half) == 7
    full = {tuple(x) for x in lat.offsets()}
    assert full == {tuple(x) for x in half} | {tuple(-x) for x in half}


def test_surface_export(tmp_path, small):
    plan = make_baseline("tdi", small, 0.5)
    surf = surface_export(plan, 0, (-2, 2), (-1, 1))
    db = surf.db
    assert db.shape == (5, 3)
    assert db[2, 1] == pytest.approx(0.0)
    assert np.all(db >= CLAMP_DB) and np.all(db <= 1e-9)
    path = tmp_path / "surf.csv"
    surf.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "l,nu,value_db" and len(lines) == 2 + 15


def test_zero_mainlobe(small):
    with pytest.raises(ZeroMainlobe):
        surface_export(empty_plan(2, 2, (8, 4)), 0, (-1, 1), (-1, 1))
