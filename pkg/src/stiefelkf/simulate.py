"""Exact-discretization simulation of the ambient linear SDE with
antisymmetric drift, plus noisy projected measurements.

The ambient process follows dX = A X dt + nu dB with X0 ~ N(mu0, sigma0^2 I)
and antisymmetric A, so over a step dt the exact update is
X_j = expm(dt A) X_{j-1} + V_j with V_j ~ N(0, dt nu^2 I).  Measurements are
Z = pr(pr(X) + W) with ambient W ~ N(0, xi^2 I) by default; a config switch
draws tangent-space noise instead (the two conventions both appear in the
problem statement and are reconciled nowhere, so both are implemented).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DomainError, SingularProjectionError, TrajectoryError
from .geometry import StiefelManifold
from .linalg import matrix_exp, polar_orthogonal
from .validation import as_generator, as_matrix, check_variance

ANTISYM_ATOL = 1e-10

NOISE_AMBIENT = "ambient"
NOISE_TANGENT = "tangent"


@dataclass(frozen=True)
class SystemModel:
    """Problem data: drift, noise levels, initial law, manifold size."""

    n: int
    k: int
    drift: np.ndarray          # antisymmetric n-by-n
    nu2: float                 # process noise variance rate
    xi2: float                 # measurement noise variance
    mu0: np.ndarray            # initial mean, on St(n, k)
    sigma02: float             # initial ambient variance

    def __post_init__(self):
        manifold = StiefelManifold(self.n, self.k)
        drift = as_matrix(self.drift, "drift")
        if drift.shape != (self.n, self.n):
            raise DomainError(f"drift must be {self.n}x{self.n}, got {drift.shape}")
        asym = np.linalg.norm(drift + drift.T)
        if asym >= ANTISYM_ATOL:
            raise DomainError(f"drift is not antisymmetric: ||A + A^T|| = {asym:.3e}")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "mu0", manifold.check_point(self.mu0))
        check_variance(self.nu2, "nu2")
        check_variance(self.xi2, "xi2")
        check_variance(self.sigma02, "sigma02")

    @property
    def manifold(self) -> StiefelManifold:
        return StiefelManifold(self.n, self.k)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray          # (N+1,), starting at 0
    states: np.ndarray         # (N+1, n, k) ambient
    projected: np.ndarray      # (N+1, n, k) on St(n, k)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class MeasurementSeries:
    times: np.ndarray          # (L,)
    indices: np.ndarray        # (L,) positions on the trajectory grid
    values: np.ndarray         # (L, n, k) on St(n, k)
    redraws: int = field(default=0)

    def __len__(self) -> int:
        return self.times.size


def discretize_drift(drift: np.ndarray, t: float) -> np.ndarray:
    """Flow matrix expm(t A); orthogonal for antisymmetric A."""
    drift = as_matrix(drift, "drift")
    asym = np.linalg.norm(drift + drift.T)
    if asym >= ANTISYM_ATOL:
        raise DomainError(f"drift is not antisymmetric: ||A + A^T|| = {asym:.3e}")
    return matrix_exp(float(t) * drift)


def simulate_trajectory(model: SystemModel, dt: float, steps: int,
                        rng) -> Trajectory:
    """Simulate the ambient process on a uniform grid of ``steps`` steps.

    Deterministic given the generator state; the draw order is X0 first,
    then one ambient noise matrix per step.
    """
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    steps = int(steps)
    if steps < 1:
        raise DomainError("need at least one step")
    rng = as_generator(rng)
    n, k = model.n, model.k
    flow = discretize_drift(model.drift, dt)
    step_sd = np.sqrt(dt * model.nu2)

    states = np.empty((steps + 1, n, k))
    projected = np.empty_like(states)
    states[0] = model.mu0 + np.sqrt(model.sigma02) * rng.standard_normal((n, k))
    for j in range(1, steps + 1):
        noise = rng.standard_normal((n, k)) if step_sd > 0 else 0.0
        states[j] = flow @ states[j - 1] + step_sd * noise
    for j in range(steps + 1):
        try:
            projected[j] = polar_orthogonal(states[j])
        except SingularProjectionError as exc:
            raise TrajectoryError(
                f"projection lost rank at step {j} (t = {j * dt:g})", step=j
            ) from exc
    times = dt * np.arange(steps + 1)
    return Trajectory(times=times, states=states, projected=projected)


def simulate_measurements(traj: Trajectory, model: SystemModel,
                          measurement_indices, rng,
                          noise_mode: str = NOISE_AMBIENT) -> MeasurementSeries:
    """Noisy projected measurements at the given trajectory grid indices.

    Ambient mode: Z = pr(pr(X) + W), W ~ N(0, xi^2 I_{n x k}).
    Tangent mode: the perturbation is drawn isotropically in the tangent
    space at pr(X) instead.  A failed projection is redrawn once, then the
    measurement aborts.
    """
    rng = as_generator(rng)
    if noise_mode not in (NOISE_AMBIENT, NOISE_TANGENT):
        raise DomainError(f"unknown noise mode {noise_mode!r}")
    idx = np.asarray(measurement_indices, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise DomainError("need a non-empty 1-D list of measurement indices")
    if np.any(idx < 0) or np.any(idx >= len(traj)):
        raise DomainError("measurement index outside the trajectory grid")
    manifold = model.manifold
    sd = np.sqrt(model.xi2)
    values = np.empty((idx.size, model.n, model.k))
    redraws = 0
    for i, j in enumerate(idx):
        base = traj.projected[j]
        for attempt in range(2):
            if noise_mode == NOISE_AMBIENT:
                pert = sd * rng.standard_normal((model.n, model.k))
            else:
                pert = manifold.random_tangent(base, model.xi2, rng)
            try:
                values[i] = polar_orthogonal(base + pert)
                break
            except SingularProjectionError:
                redraws += 1
                if attempt == 1:
                    raise TrajectoryError(
                        f"measurement {i} at grid index {j} failed projection twice",
                        step=int(j),
                    ) from None
    return MeasurementSeries(
        times=traj.times[idx], indices=idx, values=values, redraws=redraws
    )


# ---------------------------------------------------------------------------
# CSV export (documented in FORMATS.md)
# ---------------------------------------------------------------------------

def _coord_names(prefix: str, n: int, k: int) -> list[str]:
    return [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(k)]


def trajectory_csv(traj: Trajectory, model: SystemModel,
                   header_lines: list[str] | None = None) -> str:
    """Render a trajectory as CSV text: time, ambient coords (row-major),
    projected coords (row-major); '#' comment lines carry metadata."""
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write(f"# n={model.n} k={model.k}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time"]
                    + _coord_names("x", model.n, model.k)
                    + _coord_names("p", model.n, model.k))
    for t, state, proj in zip(traj.times, traj.states, traj.projected):
        writer.writerow([repr(float(t))]
                        + [repr(float(v)) for v in state.ravel()]
                        + [repr(float(v)) for v in proj.ravel()])
    return buf.getvalue()


def measurements_csv(series: MeasurementSeries, model: SystemModel,
                     header_lines: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write(f"# n={model.n} k={model.k}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "grid_index"] + _coord_names("z", model.n, model.k))
    for t, j, z in zip(series.times, series.indices, series.values):
        writer.writerow([repr(float(t)), int(j)]
                        + [repr(float(v)) for v in z.ravel()])
    return buf.getvalue()


def write_trajectory_csv(path, traj: Trajectory, model: SystemModel,
                         header_lines: list[str] | None = None) -> None:
    Path(path).write_text(trajectory_csv(traj, model, header_lines))


def write_measurements_csv(path, series: MeasurementSeries, model: SystemModel,
                           header_lines: list[str] | None = None) -> None:
    Path(path).write_text(measurements_csv(series, model, header_lines))
