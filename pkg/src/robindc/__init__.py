"""Loosely coupled Robin-Robin splitting for two heat equations sharing an interface.

A prediction step solves the two subdomains one after the other with Robin
transmission data; a defect-correction pass with the same matrices lifts the
time accuracy to second order.
"""
from .analysis import (ConvergenceReport, DiagnosticSeries, ErrorNorms, ErrorRecord,
                       convergence_study, energy_series, error_norms, prediction_diagnostics, rates)
from .mesh import BoundaryKind, InterfaceSpec, Mesh, build_mesh
from .problems import ProblemSpec, example_dirichlet, example_neumann, example_viscosity, get_problem
from .schemes import (SCHEMES, CoupledState, StepOperators, correction_step, prediction_step,
                      run_trajectory)

__all__ = [
    "BoundaryKind", "ConvergenceReport", "CoupledState", "DiagnosticSeries", "ErrorNorms",
    "ErrorRecord", "InterfaceSpec", "Mesh", "ProblemSpec", "SCHEMES", "StepOperators",
    "build_mesh", "convergence_study", "correction_step", "energy_series", "error_norms",
    "example_dirichlet", "example_neumann", "example_viscosity", "get_problem",
    "prediction_diagnostics", "prediction_step", "rates", "run_trajectory",
]
