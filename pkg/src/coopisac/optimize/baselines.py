"""Baseline allocation patterns made feasible under the design constraints.

A pattern from :func:`coopisac.grid.make_baseline` spends the full budget
uniformly, which can break the sidelobe cap.  Here each pattern keeps its
uniform power law but is scaled down to the largest factor that meets the
cap, and the sensing fraction is picked from a grid so the sum-rate target
holds.  The best (lowest CRB) fraction is reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopisac import fisher
from coopisac.ambiguity import peak_sidelobe
from coopisac.errors import CoopIsacError
from coopisac.grid import AllocationPlan, PatternKind, make_baseline
from coopisac.signal import sum_rate_bpshz

DEFAULT_FRACTIONS = (0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0)


@dataclass(frozen=True, eq=False)
class BaselineResult:
    kind: str
    plan: AllocationPlan
    crb: float
    sensing_fraction: float
    power_scale: float
    rate: float
    sidelobe_peak: float


def constrain_plan(plan: AllocationPlan, scenario, use_rate=True, use_sidelobe=True):
    """Scale ``plan`` power down to meet the sidelobe cap; None if the rate then fails."""
    c = 1.0
    if use_sidelobe:
        peak = peak_sidelobe(plan, scenario)
        beta0 = scenario.sidelobe.beta0
        if peak > beta0:
            c = beta0 / peak * (1 - 1e-12)
    scaled = plan.scaled(c) if c < 1.0 else plan
    rate = sum_rate_bpshz(scenario, scaled)
    if use_rate and scenario.num_users > 0 and rate < scenario.rate_threshold_bpshz:
        return None, c, rate
    return scaled, c, rate


def feasible_baseline(
    kind,
    scenario,
    seed: int = 0,
    fractions=DEFAULT_FRACTIONS,
    use_rate: bool = True,
    use_sidelobe: bool = True,
) -> BaselineResult | None:
    """Best constraint-feasible version of one pattern kind (None if none is)."""
    kind = PatternKind(kind)
    best = None
    for frac in fractions:
        plan = make_baseline(kind, scenario, frac, seed)
        scaled, c, rate = constrain_plan(plan, scenario, use_rate, use_sidelobe)
        if scaled is None:
            continue
        try:
            crb = fisher.weighted_crb(scenario, scaled)
        except CoopIsacError:
            continue
        if best is None or crb < best.crb:
            best = BaselineResult(kind.value, scaled, crb, frac, c, rate, peak_sidelobe(scaled, scenario))
    return best


def baseline_suite(
    scenario,
    kinds=("tdb", "fdb", "tdi", "fdi"),
    num_random: int = 50,
    seed: int = 0,
    **kw,
) -> dict[str, BaselineResult | None]:
    """Feasible versions of the structured patterns plus the best of ``num_random`` random plans."""
    out = {k: feasible_baseline(k, scenario, seed, **kw) for k in kinds}
    if num_random > 0:
        rng = np.random.default_rng(seed)
        best = None
        for s in rng.integers(0, 2**31 - 1, size=num_random):
            r = feasible_baseline("random", scenario, int(s), **kw)
            if r is not None and (best is None or r.crb < best.crb):
                best = r
        out["random"] = best
    return out


def best_baseline(results: dict) -> BaselineResult | None:
    found = [r for r in results.values() if r is not None]
    return min(found, key=lambda r: r.crb) if found else None
