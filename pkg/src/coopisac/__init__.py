"""Cooperative OFDM-ISAC sensing bounds, estimators and resource allocation."""

from coopisac.errors import (
    CoopIsacError,
    DegenerateGeometry,
    EmptyLink,
    Infeasible,
    InvalidFraction,
    NoConvergence,
    NumericalBreakdown,
    ParseError,
    PhaseIInfeasible,
    RankDeficientFusion,
    SingularFim,
    SolverStall,
    UnobservableLink,
    ValidationError,
    ZeroMainlobe,
)

__version__ = "0.1.0"

__all__ = [
    "CoopIsacError",
    "DegenerateGeometry",
    "EmptyLink",
    "Infeasible",
    "InvalidFraction",
    "NoConvergence",
    "NumericalBreakdown",
    "ParseError",
    "PhaseIInfeasible",
    "RankDeficientFusion",
    "SingularFim",
    "SolverStall",
    "UnobservableLink",
    "ValidationError",
    "ZeroMainlobe",
    "__version__",
]
