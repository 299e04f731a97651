"""Spectra and eigenfunctions of point scatterers on flat tori and Dirichlet boxes."""

__version__ = "0.1.0"

from .errors import (
    CoincidenceError,
    ConfigError,
    ConvergenceError,
    DefinednessError,
    DomainError,
    NumericError,
    PointScatterError,
    PoleError,
    ResourceError,
)
from .geometry import DirichletBox, FlatTorus, Mode, SpectralGeometry, distinct_eigenvalues, enumerate_modes, mode_function
from .greens import GreensEvaluator, default_cutoff
from .secular import NewEigenpair, ScattererSet, SecularSystem, old_eigenspace_survivors
from .wavefield import Eigenfunction, Mollifier, Observable
from .ensemble import (
    DisplacedLattice,
    RadialProfile,
    UniformTorus,
    f_localization_test,
    localization_scan,
    run_equidistribution,
    run_theta,
    sample_positions,
)

__all__ = [
    "CoincidenceError", "ConfigError", "ConvergenceError", "DefinednessError", "DomainError", "NumericError",
    "PointScatterError", "PoleError", "ResourceError",
    "DirichletBox", "FlatTorus", "Mode", "SpectralGeometry", "distinct_eigenvalues", "enumerate_modes", "mode_function",
    "GreensEvaluator", "default_cutoff",
    "NewEigenpair", "ScattererSet", "SecularSystem", "old_eigenspace_survivors",
    "Eigenfunction", "Mollifier", "Observable",
    "DisplacedLattice", "RadialProfile", "UniformTorus", "f_localization_test", "localization_scan",
    "run_equidistribution", "run_theta", "sample_positions",
]
