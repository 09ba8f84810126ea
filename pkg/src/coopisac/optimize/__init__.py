"""Joint RE selection and power allocation minimizing the SLF CRB."""

from coopisac.optimize.algorithm import OptimizeTrace, SolverOptions, TraceRow, run_algorithm1
from coopisac.optimize.baselines import BaselineResult, baseline_suite, best_baseline, feasible_baseline

__all__ = [
    "BaselineResult",
    "OptimizeTrace",
    "SolverOptions",
    "TraceRow",
    "baseline_suite",
    "best_baseline",
    "feasible_baseline",
    "run_algorithm1",
]
