"""The variance-transfer function eta: ambient isotropic variance sigma^2 of
a normal with mean on St(n, k) -> intrinsic scalar variance of its polar
projection.

On the 2-sphere eta has a closed form (quadrature of the exact angular
density); elsewhere it is estimated by Monte Carlo: draw from
N(I_{n,k}, sigma^2 id), project, log at I_{n,k}, average the squared
canonical norm per tangent dimension.  Tables of eta over a sigma^2 grid are
made monotone (isotonic regression) so they can be inverted, and serialise
to a diffable JSON file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.integrate
import scipy.special
from sklearn.isotonic import IsotonicRegression

from .exceptions import DomainError, ExtrapolationError, UnreliableRegimeError
from .geometry import SAFETY_RADIUS, StiefelManifold, _dist_many
from .linalg import _polar_many
from .validation import as_generator

_MC_CHUNK = 131072
_REJECT_BUDGET = 0.01

DEFAULT_GRID_MIN = 1e-4
DEFAULT_GRID_MAX = 2.0
DEFAULT_GRID_NODES = 64
DEFAULT_DRAWS_PER_NODE = 200_000


def eta_closed_form_s2(sigma2: float) -> float:
    """Exact intrinsic scalar variance on S^2 for ambient variance sigma2.

    Integrates theta^2 against the exact density of the angle between the
    projected normal and its mean, divided by the tangent dimension (2).
    The density bracket is evaluated in a cancellation-free form: the ratio
    of normal cdf to pdf is folded into exp(-sin(theta)^2 / (2 sigma2)) so
    nothing overflows for small sigma2.
    """
    sigma2 = float(sigma2)
    if sigma2 <= 0.0 or not np.isfinite(sigma2):
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    sigma = np.sqrt(sigma2)
    sqrt2pi = np.sqrt(2.0 * np.pi)
    damp = np.exp(-0.5 / sigma2)  # may underflow to 0; that term is negligible then

    def integrand(theta: float) -> float:
        alpha = np.cos(theta) / sigma
        term1 = alpha * damp
        term2 = ((alpha * alpha + 1.0) * sqrt2pi * scipy.special.ndtr(alpha)
                 * np.exp(-0.5 * np.sin(theta) ** 2 / sigma2))
        return theta * theta * np.sin(theta) * (term1 + term2)

    # breakpoints resolve the O(sigma)-wide peak near theta = 0
    pts = sorted({min(max(c * sigma, 1e-12), np.pi - 1e-12)
                  for c in (1.0, 3.0, 10.0, 30.0)} | {np.pi / 2})
    value, _ = scipy.integrate.quad(
        integrand, 0.0, np.pi, points=pts, limit=200, epsabs=1e-10, epsrel=1e-12
    )
    return value / (sqrt2pi * 2.0)  # prefactor 1/sqrt(2 pi), then per-dim (d = 2)


def eta_monte_carlo(n: int, k: int, sigma2: float, n_draws: int, rng,
                    mean: np.ndarray | None = None,
                    reject_budget: float = _REJECT_BUDGET) -> tuple[float, float]:
    """Monte Carlo estimate of eta on St(n, k) with its standard error.

    Draws are rejected and redrawn when the projection or logarithm fails
    or the implied distance exceeds the safety radius; a rejection fraction
    above ``reject_budget`` (default 1%) aborts with
    :class:`UnreliableRegimeError`, since silent truncation would bias the
    estimate.
    """
    sigma2 = float(sigma2)
    if sigma2 <= 0.0 or not np.isfinite(sigma2):
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    n_draws = int(n_draws)
    if n_draws < 2:
        raise DomainError("need at least 2 draws")
    rng = as_generator(rng)
    manifold = StiefelManifold(n, k)
    if mean is None:
        mean = np.eye(n, k)
    else:
        mean = manifold.check_point(mean)
    sigma = np.sqrt(sigma2)

    stats = np.empty(n_draws)
    accepted = 0
    attempted = 0
    rejected = 0
    while accepted < n_draws:
        chunk = min(_MC_CHUNK, n_draws - accepted)
        draws = mean + sigma * rng.standard_normal((chunk, n, k))
        attempted += chunk
        projected = _polar_many(draws)
        dists, ok = _dist_many(mean, projected, k)
        ok &= dists <= SAFETY_RADIUS
        good = dists[ok]
        rejected += chunk - good.size
        if rejected > reject_budget * max(attempted, 1):
            raise UnreliableRegimeError(
                f"{rejected}/{attempted} draws rejected at sigma2={sigma2:g} "
                f"on St({n},{k}); distribution too diffuse for eta estimation"
            )
        stats[accepted:accepted + good.size] = good * good / manifold.dim
        accepted += good.size

    estimate = float(stats.mean())
    std_error = float(stats.std(ddof=1) / np.sqrt(n_draws))
    return estimate, std_error


@dataclass(frozen=True)
class EtaTable:
    """Monotone tabulation of sigma^2 -> eta(sigma^2) for one manifold.

    ``values`` are nondecreasing (isotonic post-pass, flat runs separated by
    1e-12 bumps) so the table is numerically invertible.  Quadrature-built
    tables carry zero standard errors and n_draws = 0.
    """

    n: int
    k: int
    grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    n_draws: int
    base_seed: int | None = None
    _version: int = field(default=1, repr=False)

    @property
    def manifold(self) -> tuple[int, int]:
        return (self.n, self.k)

    def forward(self, sigma2: float) -> float:
        """Piecewise-linear eta(sigma2); zero maps to zero exactly."""
        sigma2 = float(sigma2)
        if sigma2 == 0.0:
            return 0.0  # exact fixed point of the transfer function
        if sigma2 < self.grid[0] or sigma2 > self.grid[-1]:
            raise ExtrapolationError(
                f"sigma2={sigma2:g} outside tabulated range "
                f"[{self.grid[0]:g}, {self.grid[-1]:g}]"
            )
        return float(np.interp(sigma2, self.grid, self.values))

    def inverse(self, p: float) -> float:
        """Invert the monotone interpolant by bisection (1e-12 relative)."""
        p = float(p)
        if p == 0.0:
            return 0.0
        if p < self.values[0] or p > self.values[-1]:
            raise ExtrapolationError(
                f"intrinsic variance {p:g} outside tabulated range "
                f"[{self.values[0]:g}, {self.values[-1]:g}]"
            )
        lo, hi = float(self.grid[0]), float(self.grid[-1])
        if p == self.values[0]:
            return lo
        while hi - lo > 1e-12 * hi:
            mid = 0.5 * (lo + hi)
            if np.interp(mid, self.grid, self.values) < p:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # -- serialisation (versioned, diffable plain text) ----------------------

    def to_json(self) -> str:
        payload = {
            "schema": "stiefelkf-eta-table",
            "version": self._version,
            "n": self.n,
            "k": self.k,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "std_errors": self.std_errors.tolist(),
            "n_draws": self.n_draws,
            "base_seed": self.base_seed,
        }
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "EtaTable":
        payload = json.loads(text)
        if payload.get("schema") != "stiefelkf-eta-table":
            raise DomainError("not an eta table file")
        if payload.get("version") != 1:
            raise DomainError(f"unsupported eta table version {payload.get('version')}")
        return cls(
            n=int(payload["n"]),
            k=int(payload["k"]),
            grid=np.asarray(payload["grid"], dtype=float),
            values=np.asarray(payload["values"], dtype=float),
            std_errors=np.asarray(payload["std_errors"], dtype=float),
            n_draws=int(payload["n_draws"]),
            base_seed=payload["base_seed"],
        )

    @classmethod
    def load(cls, path) -> "EtaTable":
        return cls.from_json(Path(path).read_text())


def _strictly_increasing(values: np.ndarray) -> np.ndarray:
    out = np.maximum.accumulate(values)
    for i in range(1, out.size):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + 1e-12
    return out


def default_grid(lo: float = DEFAULT_GRID_MIN, hi: float = DEFAULT_GRID_MAX,
                 nodes: int = DEFAULT_GRID_NODES) -> np.ndarray:
    return np.geomspace(lo, hi, nodes)


def build_eta_table(n: int, k: int, grid=None,
                    n_draws: int = DEFAULT_DRAWS_PER_NODE,
                    base_seed: int = 0,
                    reject_budget: float = _REJECT_BUDGET,
                    s2_quadrature: bool = True) -> EtaTable:
    """Tabulate eta over a sigma^2 grid.

    S^2 nodes use the closed-form quadrature (exact, zero standard error)
    unless ``s2_quadrature`` is off (the Monte Carlo estimate is the
    authority when the two disagree: it sees the same safety-radius
    truncation the filter machinery does);
    other manifolds use :func:`eta_monte_carlo` with one independent
    substream per node, merged in node order so the result is reproducible.
    An isotonic pass enforces the monotonicity the filter needs to invert
    the table.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("grid must be strictly increasing and positive")

    if (n, k) == (3, 1) and s2_quadrature:
        raw = np.array([eta_closed_form_s2(s2) for s2 in grid])
        errs = np.zeros_like(raw)
        n_draws_used = 0
    else:
        raw = np.empty(grid.size)
        errs = np.empty(grid.size)
        for i, s2 in enumerate(grid):
            node_rng = np.random.default_rng(
                np.random.SeedSequence(entropy=base_seed, spawn_key=(i,))
            )
            raw[i], errs[i] = eta_monte_carlo(n, k, s2, n_draws, node_rng,
                                              reject_budget=reject_budget)
        n_draws_used = int(n_draws)

    iso = IsotonicRegression(increasing=True)
    fitted = iso.fit_transform(np.arange(grid.size), raw)
    values = _strictly_increasing(fitted)
    return EtaTable(
        n=n, k=k, grid=grid, values=values, std_errors=errs,
        n_draws=n_draws_used, base_seed=int(base_seed),
    )
