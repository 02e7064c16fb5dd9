"""Symmetry verification, invariant reductions, solvers and Monte Carlo checks
for the HJB equation of a portfolio with an illiquid asset and random
liquidation time.

Modules
-------
model
    Parameters, utilities and survival laws.
jet_engine
    Second-jet points, point-symmetry generators, prolongation and brackets.
pde
    The maximized HJB equations (HARA and log, general and exponential).
lie_algebra
    Generator catalogs, symmetry defects, structure constants.
reductions
    Catalog of invariant reductions and the proportionality verifier.
solvers
    Reduced ODE and 2D solvers, Merton oracles, value reconstruction.
simulator
    Monte Carlo estimate of the survival-weighted utility functional.
cli
    Batch front door writing deterministic JSON/CSV reports.
"""

from importlib.metadata import PackageNotFoundError, version as _version

from .errors import (
    ClosureFailure,
    ConfigError,
    DegenerateSubstitutionError,
    DomainError,
    ExtrapolationError,
    HJBError,
    NonConcaveJetError,
    NonConvergenceError,
    ParameterError,
    SingularJetError,
    UnsupportedExtensionError,
)
from .jet_engine import JetPoint, lie_bracket, prolong2, sample_jets
from .lie_algebra import catalog, classify, symmetry_defect, verify_structure
from .model import Exponential, ModelParams, SuperExponential, benchmark_params
from .pde import PDESpec, make_spec, policy, residual
from .reductions import CASE_IDS, get_case, verify_reduction
from .simulator import PathConfig, perturbation_sweep, policy_from_grid, simulate_utility
from .solvers import merton_constant, reconstruct_value, solve_ode, solve_pde2d

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "CASE_IDS",
    "ClosureFailure",
    "ConfigError",
    "DegenerateSubstitutionError",
    "DomainError",
    "Exponential",
    "ExtrapolationError",
    "HJBError",
    "JetPoint",
    "ModelParams",
    "NonConcaveJetError",
    "NonConvergenceError",
    "PDESpec",
    "ParameterError",
    "PathConfig",
    "SingularJetError",
    "SuperExponential",
    "UnsupportedExtensionError",
    "benchmark_params",
    "catalog",
    "classify",
    "get_case",
    "lie_bracket",
    "make_spec",
    "merton_constant",
    "perturbation_sweep",
    "policy",
    "policy_from_grid",
    "prolong2",
    "reconstruct_value",
    "residual",
    "sample_jets",
    "simulate_utility",
    "solve_ode",
    "solve_pde2d",
    "symmetry_defect",
    "verify_reduction",
    "verify_structure",
]
