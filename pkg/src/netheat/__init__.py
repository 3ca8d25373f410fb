"""Finite element heat flow on metric graphs with time-dependent coefficients."""
from .coefficients import (
    Affine,
    CoefficientSet,
    Constant,
    ExpApproach,
    PiecewiseLinear,
    certify_bounds,
    classify_regime,
)
from .fem import AssembledSystem, build_mesh
from .graph import MetricGraph, build_graph, incidence
from .integrator import SolverConfig, simulate, step
from .scenario import parse_scenario, run, scenario_from_dict
from .spectral import generalized_eigs, track_spectrum

__all__ = [
    "Affine", "AssembledSystem", "CoefficientSet", "Constant", "ExpApproach", "MetricGraph",
    "PiecewiseLinear", "SolverConfig", "build_graph", "build_mesh", "certify_bounds", "classify_regime",
    "generalized_eigs", "incidence", "parse_scenario", "run", "scenario_from_dict", "simulate", "step",
    "track_spectrum",
]
__version__ = "0.1.0"
