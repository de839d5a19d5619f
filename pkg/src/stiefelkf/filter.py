"""Extended Kalman filter for Stiefel-manifold-valued measurements.

One epoch: push the mean along the orthogonal flow and grow the ambient
variance (predict), then fuse the measurement along the connecting geodesic
with a scalar gain (update).  The intrinsic scalar variance P tracks the
ambient variance through the transfer function eta; the posterior ambient
variance is recovered with its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .eta import EtaTable
from .exceptions import DomainError, ExtrapolationError, InjectivityRadiusError, VarianceOverflowError
from .geometry import StiefelManifold
from .linalg import matrix_exp
from .simulate import MeasurementSeries, SystemModel
from .validation import check_variance

ON_LOG_FAILURE_RAISE = "raise"
ON_LOG_FAILURE_SKIP = "skip"


@dataclass(frozen=True)
class Belief:
    """Filter state: mean on the manifold, ambient variance, intrinsic
    scalar variance (the latter two linked by eta)."""

    mean: np.ndarray
    ambient_var: float
    intrinsic_var: float

    def __post_init__(self):
        check_variance(self.ambient_var, "ambient_var")
        check_variance(self.intrinsic_var, "intrinsic_var")


@dataclass(frozen=True)
class FilterStep:
    """One filtered epoch: posterior belief plus update diagnostics."""

    time: float
    belief: Belief
    gain: float
    innovation_norm: float
    skipped: bool = field(default=False)


class StiefelEKF(BaseEstimator):
    """Extended Kalman filter on St(n, k).

    Parameters
    ----------
    model : SystemModel
        Drift, noise levels and initial law.
    eta_table : EtaTable
        Variance-transfer table for the same manifold.
    on_log_failure : {"raise", "skip"}
        What to do when a measurement lies outside the logarithm's safety
        radius at update time: abort loudly (default) or propagate the
        prediction and flag the step.
    """

    def __init__(self, model: SystemModel, eta_table: EtaTable,
                 on_log_failure: str = ON_LOG_FAILURE_RAISE):
        self.model = model
        self.eta_table = eta_table
        self.on_log_failure = on_log_failure
        if eta_table.manifold != (model.n, model.k):
            raise DomainError(
                f"eta table is for St{eta_table.manifold}, model is "
                f"St({model.n},{model.k})"
            )
        if on_log_failure not in (ON_LOG_FAILURE_RAISE, ON_LOG_FAILURE_SKIP):
            raise DomainError(f"unknown log-failure policy {on_log_failure!r}")
        self._manifold = StiefelManifold(model.n, model.k)

    # -- single steps ---------------------------------------------------------

    def initial_belief(self) -> Belief:
        return Belief(
            mean=self.model.mu0,
            ambient_var=self.model.sigma02,
            intrinsic_var=self._eta(self.model.sigma02),
        )

    def _eta(self, sigma2: float) -> float:
        try:
            return self.eta_table.forward(sigma2)
        except ExtrapolationError as exc:
            raise VarianceOverflowError(str(exc)) from exc

    def predict(self, belief: Belief, t: float) -> Belief:
        """Propagate the belief over a gap of length t with no measurement.

        Mean follows the orthogonal flow expm(tA); ambient variance grows
        by t nu^2; the intrinsic variance is the eta image of the result.
        """
        t = float(t)
        if t < 0.0:
            raise DomainError(f"time step must be non-negative, got {t}")
        if t == 0.0:
            return belief
        mean = self._manifold.project(matrix_exp(t * self.model.drift) @ belief.mean)
        sigma2 = belief.ambient_var + t * self.model.nu2
        return Belief(mean=mean, ambient_var=sigma2, intrinsic_var=self._eta(sigma2))

    def update(self, belief: Belief, z: np.ndarray) -> FilterStep:
        """Fuse a measurement into a post-predict belief.

        Gain K = sigma_pred^2 / (sigma_pred^2 + xi^2); the fused mean sits
        at parameter K along the geodesic from the predicted mean to the
        measurement; P_post = (1 - K) P_pred and the ambient variance is
        eta^{-1}(P_post).
        """
        z = self._manifold.check_point(z)
        sigma2 = belief.ambient_var
        xi2 = self.model.xi2
        denom = sigma2 + xi2
        gain = sigma2 / denom if denom > 0.0 else 0.0

        try:
            y = self._manifold.log(belief.mean, z)
        except InjectivityRadiusError:
            if self.on_log_failure == ON_LOG_FAILURE_SKIP:
                return FilterStep(time=np.nan, belief=belief, gain=gain,
                                  innovation_norm=np.nan, skipped=True)
            raise
        innovation = self._manifold.norm(belief.mean, y)
        if gain == 1.0:
            mean = z  # perfect measurement
        elif gain == 0.0:
            mean = belief.mean
        else:
            mean = self._manifold.exp(belief.mean, gain * y)
        p_post = (1.0 - gain) * belief.intrinsic_var
        posterior = Belief(
            mean=mean,
            ambient_var=self.eta_table.inverse(p_post),
            intrinsic_var=p_post,
        )
        return FilterStep(time=np.nan, belief=posterior, gain=gain,
                          innovation_norm=innovation)

    # -- full runs ------------------------------------------------------------

    def run(self, measurements: MeasurementSeries,
            initial: Belief | None = None) -> list[FilterStep]:
        """Alternate predict/update across a measurement series.

        Returns one :class:`FilterStep` per measurement epoch (posterior
        belief, gain, skip flag).  An empty series is allowed and produces
        an empty track (pure prediction can be done with :meth:`predict`).
        """
        times = np.asarray(measurements.times, dtype=float)
        if times.size and np.any(np.diff(times) <= 0):
            raise DomainError("measurement times must be strictly increasing")
        belief = initial if initial is not None else self.initial_belief()
        track: list[FilterStep] = []
        prev_t = 0.0
        for i in range(times.size):
            gap = times[i] - prev_t
            belief = self.predict(belief, gap)
            step = self.update(belief, measurements.values[i])
            if not step.skipped:
                belief = step.belief
            track.append(replace(step, time=float(times[i])))
            prev_t = times[i]
        return track
