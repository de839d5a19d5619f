"""Extended Kalman filtering for measurements on Stiefel manifolds.

Geometry kernels for St(n, k) under the canonical metric, intrinsic
statistics of projected normals (including the variance-transfer function
eta), an exact-discretization SDE simulator, the manifold filter, and an
experiment harness with a CLI.
"""

from .eta import EtaTable, build_eta_table, eta_closed_form_s2, eta_monte_carlo
from .exceptions import (
    BaseMismatchError,
    ConfigError,
    DimensionError,
    DomainError,
    ExtrapolationError,
    InjectivityRadiusError,
    InsufficientSampleError,
    MeanNotFoundError,
    SingularProjectionError,
    StiefelKFError,
    TrajectoryError,
    UnreliableRegimeError,
    VarianceOverflowError,
)
from .filter import Belief, FilterStep, StiefelEKF
from .geometry import SAFETY_RADIUS, StiefelManifold
from .linalg import matrix_exp, polar_orthogonal, qr_thin
from .simulate import (
    MeasurementSeries,
    SystemModel,
    Trajectory,
    discretize_drift,
    simulate_measurements,
    simulate_trajectory,
)
from .stats import (
    FrechetMean,
    IntrinsicMoments,
    IntrinsicStats,
    TangentCoordinates,
    frechet_mean,
    intrinsic_moments,
)

__version__ = "0.1.0"

__all__ = [
    "Belief",
    "EtaTable",
    "FilterStep",
    "FrechetMean",
    "IntrinsicMoments",
    "IntrinsicStats",
    "MeasurementSeries",
    "SAFETY_RADIUS",
    "StiefelEKF",
    "StiefelManifold",
    "SystemModel",
    "TangentCoordinates",
    "Trajectory",
    "build_eta_table",
    "discretize_drift",
    "eta_closed_form_s2",
    "eta_monte_carlo",
    "frechet_mean",
    "intrinsic_moments",
    "matrix_exp",
    "polar_orthogonal",
    "qr_thin",
    "simulate_measurements",
    "simulate_trajectory",
    # exceptions
    "StiefelKFError",
    "BaseMismatchError",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "ExtrapolationError",
    "InjectivityRadiusError",
    "InsufficientSampleError",
    "MeanNotFoundError",
    "SingularProjectionError",
    "TrajectoryError",
    "UnreliableRegimeError",
    "VarianceOverflowError",
]
