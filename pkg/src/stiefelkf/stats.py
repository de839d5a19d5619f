"""Intrinsic statistics on Stiefel manifolds: Fréchet mean, tangent-space
sample covariance and scalar variance, plus sklearn-style estimator wrappers
so the statistics compose with the wider ecosystem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import (
    InjectivityRadiusError,
    InsufficientSampleError,
    MeanNotFoundError,
)
from .geometry import SAFETY_RADIUS, StiefelManifold, _log_rescued

FRECHET_TOL = 1e-9
FRECHET_MAX_ITER = 200


def _as_point_stack(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise InsufficientSampleError(
            f"expected a non-empty stack of (n, k) points, got shape {pts.shape}"
        )
    return pts


def _frechet(points: np.ndarray, manifold: StiefelManifold,
             tol: float, max_iter: int) -> tuple[np.ndarray, int, float]:
    """Fixed-point iteration for the barycenter: mean of logs must vanish."""
    mean = manifold.project(points.mean(axis=0))
    n_pts = points.shape[0]
    for it in range(max_iter):
        deltas, dists, ok = _log_rescued(mean, points, manifold.k)
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise InjectivityRadiusError(
                f"log from the running mean failed for sample point {bad}"
            )
        if np.any(dists > SAFETY_RADIUS):
            bad = int(np.argmax(dists))
            raise InjectivityRadiusError(
                f"sample point {bad} is {dists[bad]:.4f} from the running mean, "
                f"beyond the safety radius {SAFETY_RADIUS:.4f}"
            )
        step = deltas.mean(axis=0)
        residual = manifold.norm(mean, step)
        if residual < tol:
            return mean, it, residual
        mean = manifold.exp(mean, step)
    raise MeanNotFoundError(
        f"barycenter iteration did not reach residual {tol:.1e} in {max_iter} "
        f"iterations over {n_pts} points"
    )


def frechet_mean(points, tol: float = FRECHET_TOL,
                 max_iter: int = FRECHET_MAX_ITER) -> np.ndarray:
    """Intrinsic (Fréchet) mean of points on a common St(n, k).

    Iterates mean <- exp_mean(average of log_mean(Y_i)) from the projected
    arithmetic mean until the average log has canonical norm below ``tol``.
    """
    pts = _as_point_stack(points)
    manifold = StiefelManifold(pts.shape[1], pts.shape[2])
    mean, _, _ = _frechet(pts, manifold, tol, max_iter)
    return mean


@dataclass(frozen=True)
class IntrinsicMoments:
    """Fréchet mean, tangent-basis sample covariance and scalar variance."""

    mean: np.ndarray
    covariance: np.ndarray
    scalar_variance: float
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]


def intrinsic_moments(points, tol: float = FRECHET_TOL,
                      max_iter: int = FRECHET_MAX_ITER) -> IntrinsicMoments:
    """Sample moments in the canonical tangent basis at the Fréchet mean.

    cov_ij = 1/(N-1) sum_l <log(Y_l), B_i> <log(Y_l), B_j>; the scalar
    variance is trace(cov) / dim.
    """
    pts = _as_point_stack(points)
    if pts.shape[0] < 2:
        raise InsufficientSampleError("need at least 2 points for a covariance")
    manifold = StiefelManifold(pts.shape[1], pts.shape[2])
    mean, _, _ = _frechet(pts, manifold, tol, max_iter)
    basis = manifold.tangent_basis(mean)
    deltas, _, ok = _log_rescued(mean, pts, manifold.k)
    if not ok.all():
        raise InjectivityRadiusError("log failed while computing moments")
    coords = _coords_many(manifold, mean, basis, deltas)
    cov = coords.T @ coords / (pts.shape[0] - 1)
    return IntrinsicMoments(
        mean=mean,
        covariance=cov,
        scalar_variance=float(np.trace(cov)) / manifold.dim,
        basis=basis,
    )


def _coords_many(manifold: StiefelManifold, base: np.ndarray,
                 basis: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Canonical-basis coordinates for a stack of tangent vectors, (N, d)."""
    xv = np.einsum("ji,Njl->Nil", base, deltas)   # x^T delta per sample
    xb = np.einsum("ji,djl->dil", base, basis)    # x^T B per basis vector
    return (np.einsum("Njl,djl->Nd", deltas, basis)
            - 0.5 * np.einsum("Nil,dil->Nd", xv, xb))


# ---------------------------------------------------------------------------
# sklearn-style estimators
# ---------------------------------------------------------------------------

class FrechetMean(BaseEstimator):
    """Fréchet mean as an estimator: ``fit(X)`` on a stack of (n, k) points.

    Attributes after fit: ``mean_``, ``n_iter_``, ``residual_``,
    ``manifold_``.
    """

    def __init__(self, tol: float = FRECHET_TOL, max_iter: int = FRECHET_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        pts = _as_point_stack(X)
        self.manifold_ = StiefelManifold(pts.shape[1], pts.shape[2])
        self.mean_, self.n_iter_, self.residual_ = _frechet(
            pts, self.manifold_, self.tol, self.max_iter
        )
        return self


class IntrinsicStats(BaseEstimator):
    """Mean/covariance/scalar-variance estimator on St(n, k).

    Attributes after fit: ``mean_``, ``covariance_``, ``scalar_variance_``,
    ``basis_``, ``manifold_``.
    """

    def __init__(self, tol: float = FRECHET_TOL, max_iter: int = FRECHET_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        moments = intrinsic_moments(X, tol=self.tol, max_iter=self.max_iter)
        self.mean_ = moments.mean
        self.covariance_ = moments.covariance
        self.scalar_variance_ = moments.scalar_variance
        self.basis_ = moments.basis
        self.manifold_ = StiefelManifold(*moments.mean.shape)
        return self


class TangentCoordinates(BaseEstimator, TransformerMixin):
    """Transformer mapping manifold points to tangent coordinates at the
    Fréchet mean (or a fixed base point), so manifold-valued data can feed
    ordinary vector pipelines.
    """

    def __init__(self, base_point=None, tol: float = FRECHET_TOL,
                 max_iter: int = FRECHET_MAX_ITER):
        self.base_point = base_point
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        pts = _as_point_stack(X)
        self.manifold_ = StiefelManifold(pts.shape[1], pts.shape[2])
        if self.base_point is not None:
            self.base_ = self.manifold_.check_point(self.base_point)
        else:
            self.base_, _, _ = _frechet(pts, self.manifold_, self.tol, self.max_iter)
        self.basis_ = self.manifold_.tangent_basis(self.base_)
        return self

    def transform(self, X) -> np.ndarray:
        pts = _as_point_stack(X)
        deltas, _, ok = _log_rescued(self.base_, pts, self.manifold_.k)
        if not ok.all():
            raise InjectivityRadiusError("log failed during transform")
        return _coords_many(self.manifold_, self.base_, self.basis_, deltas)

    def inverse_transform(self, C) -> np.ndarray:
        coords = np.asarray(C, dtype=float)
        out = np.empty((coords.shape[0],) + self.manifold_.shape)
        for i, row in enumerate(coords):
            v = self.manifold_.from_tangent_coords(self.base_, row, self.basis_)
            out[i] = self.manifold_.exp(self.base_, v)
        return out
