"""Input validation helpers shared by the public API.

All public entry points convert inputs to float64 arrays and check shape,
finiteness and manifold constraints here, so numerical kernels can assume
clean data.
"""

from __future__ import annotations

import numpy as np

from .exceptions import BaseMismatchError, DimensionError, DomainError

STIEFEL_ATOL = 1e-8
TANGENT_ATOL = 1e-8


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Convert to a 2-D float64 array with finite entries."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    if a.size == 0:
        raise DimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def check_square(x, name: str = "x") -> np.ndarray:
    a = as_matrix(x, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def check_shape(x, shape: tuple[int, int], name: str = "x") -> np.ndarray:
    a = as_matrix(x, name)
    if a.shape != shape:
        raise DimensionError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def check_stiefel(x, n: int | None = None, k: int | None = None,
                  atol: float = STIEFEL_ATOL, name: str = "x") -> np.ndarray:
    """Validate an n-by-k matrix with orthonormal columns."""
    a = as_matrix(x, name)
    if n is not None and k is not None and a.shape != (n, k):
        raise DimensionError(f"{name} must have shape {(n, k)}, got {a.shape}")
    if a.shape[0] < a.shape[1]:
        raise DimensionError(f"{name} needs at least as many rows as columns, got {a.shape}")
    gram = a.T @ a
    defect = np.linalg.norm(gram - np.eye(a.shape[1]))
    if defect > atol:
        raise DomainError(
            f"{name} is not orthonormal: ||x^T x - I|| = {defect:.3e} > {atol:.1e}"
        )
    return a


def check_tangent(x: np.ndarray, v, atol: float = TANGENT_ATOL,
                  name: str = "v") -> np.ndarray:
    """Validate tangency of ``v`` at base point ``x``: x^T v must be skew."""
    a = as_matrix(v, name)
    if a.shape != x.shape:
        raise DimensionError(f"{name} must match base shape {x.shape}, got {a.shape}")
    s = x.T @ a
    defect = np.linalg.norm(s + s.T)
    if defect > atol:
        raise DomainError(
            f"{name} is not tangent at the base point: ||x^T v + v^T x|| = {defect:.3e}"
        )
    return a


def check_same_base(x: np.ndarray, y: np.ndarray) -> None:
    """Require two tangent vectors to be attached to the same base point."""
    if x.shape != y.shape or not np.array_equal(x, y):
        raise BaseMismatchError("tangent vectors have different base points")


def check_variance(value: float, name: str = "variance") -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise DomainError(f"{name} must be a finite non-negative number, got {value}")
    return value


def as_generator(seed) -> np.random.Generator:
    """Accept a Generator, SeedSequence or integer seed; return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
