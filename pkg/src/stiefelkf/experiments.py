"""Experiment harness: single filtered runs, SNR sweeps with repeated
realizations, and eta-table building, driven by a declarative JSON config.

Every output file embeds the fully resolved config and base seed, and all
randomness derives from (base_seed, cell_index, realization_index) via
SeedSequence spawn keys, so runs replay exactly.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eta import EtaTable, build_eta_table, default_grid
from .exceptions import ConfigError, StiefelKFError
from .filter import ON_LOG_FAILURE_RAISE, ON_LOG_FAILURE_SKIP, StiefelEKF
from .geometry import _dist_many
from .simulate import (
    NOISE_AMBIENT,
    NOISE_TANGENT,
    SystemModel,
    measurements_csv,
    simulate_measurements,
    simulate_trajectory,
    trajectory_csv,
)

MODE_SINGLE = "single-run"
MODE_SWEEP = "snr-sweep"
MODE_ETA = "eta-table"

DEFAULT_NU2_LADDER = (0.1, 0.2, 0.5, 1.0)
DEFAULT_SNR_DIVISORS = (1.0, 2.8, 4.6, 6.4, 8.2, 10.0)

_SCHEMA_KEYS = {
    "schema", "version", "mode", "manifold", "drift", "mu0", "nu2", "xi2",
    "sigma02", "nu2_values", "snr_divisors", "n_steps", "n_measurements",
    "t_final", "repetitions", "base_seed", "noise_mode", "log_failure",
    "eta", "workers",
}
_ETA_KEYS = {"path", "grid_min", "grid_max", "nodes", "draws", "seed",
             "reject_budget"}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    n: int
    k: int
    drift: tuple
    mu0: tuple
    nu2: float
    xi2: float
    sigma02: float
    nu2_values: tuple
    snr_divisors: tuple
    n_steps: int
    n_measurements: int
    t_final: float
    repetitions: int
    base_seed: int
    noise_mode: str
    log_failure: str
    eta: dict
    workers: int

    def as_dict(self) -> dict:
        return {
            "schema": "stiefelkf-experiment",
            "version": 1,
            "mode": self.mode,
            "manifold": {"n": self.n, "k": self.k},
            "drift": [list(row) for row in self.drift],
            "mu0": [list(row) for row in self.mu0],
            "nu2": self.nu2,
            "xi2": self.xi2,
            "sigma02": self.sigma02,
            "nu2_values": list(self.nu2_values),
            "snr_divisors": list(self.snr_divisors),
            "n_steps": self.n_steps,
            "n_measurements": self.n_measurements,
            "t_final": self.t_final,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "noise_mode": self.noise_mode,
            "log_failure": self.log_failure,
            "eta": dict(self.eta),
            "workers": self.workers,
        }

    def provenance(self) -> list[str]:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return [f"config: {blob}", f"base-seed: {self.base_seed}"]

    def system_model(self, nu2: float | None = None,
                     xi2: float | None = None) -> SystemModel:
        return SystemModel(
            n=self.n, k=self.k,
            drift=np.array(self.drift, dtype=float),
            nu2=self.nu2 if nu2 is None else float(nu2),
            xi2=self.xi2 if xi2 is None else float(xi2),
            mu0=np.array(self.mu0, dtype=float),
            sigma02=self.sigma02,
        )

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @property
    def measurement_indices(self) -> np.ndarray:
        stride = self.n_steps // self.n_measurements
        return stride * np.arange(1, self.n_measurements + 1)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping; unknown keys are hard errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw.get("schema", "stiefelkf-experiment") != "stiefelkf-experiment":
        raise ConfigError("not a stiefelkf experiment config")
    if raw.get("version", 1) != 1:
        raise ConfigError(f"unsupported config version {raw.get('version')}")
    mode = raw.get("mode", MODE_SINGLE)
    if mode not in (MODE_SINGLE, MODE_SWEEP, MODE_ETA):
        raise ConfigError(f"unknown mode {mode!r}")
    manifold = raw.get("manifold")
    if (not isinstance(manifold, dict) or set(manifold) != {"n", "k"}):
        raise ConfigError('config needs "manifold": {"n": ..., "k": ...}')
    n, k = int(manifold["n"]), int(manifold["k"])
    eta_raw = raw.get("eta", {})
    if not isinstance(eta_raw, dict):
        raise ConfigError('"eta" must be an object')
    unknown = set(eta_raw) - _ETA_KEYS
    if unknown:
        raise ConfigError(f"unknown eta keys: {sorted(unknown)}")

    noise_mode = raw.get("noise_mode", NOISE_AMBIENT)
    if noise_mode not in (NOISE_AMBIENT, NOISE_TANGENT):
        raise ConfigError(f"unknown noise_mode {noise_mode!r}")
    log_failure = raw.get("log_failure", ON_LOG_FAILURE_RAISE)
    if log_failure not in (ON_LOG_FAILURE_RAISE, ON_LOG_FAILURE_SKIP):
        raise ConfigError(f"unknown log_failure {log_failure!r}")

    n_steps = int(raw.get("n_steps", 2000))
    n_meas = int(raw.get("n_measurements", 20))
    if n_steps < 1 or n_meas < 1 or n_steps % n_meas != 0:
        raise ConfigError("n_steps must be a positive multiple of n_measurements")

    cfg = ExperimentConfig(
        mode=mode,
        n=n, k=k,
        drift=tuple(tuple(float(v) for v in row) for row in raw["drift"]),
        mu0=tuple(tuple(float(v) for v in row) for row in raw["mu0"]),
        nu2=float(raw.get("nu2", 1.0)),
        xi2=float(raw.get("xi2", 0.1)),
        sigma02=float(raw.get("sigma02", 0.1)),
        nu2_values=tuple(float(v) for v in raw.get("nu2_values", DEFAULT_NU2_LADDER)),
        snr_divisors=tuple(float(v) for v in raw.get("snr_divisors", DEFAULT_SNR_DIVISORS)),
        n_steps=n_steps,
        n_measurements=n_meas,
        t_final=float(raw.get("t_final", 1.0)),
        repetitions=int(raw.get("repetitions", 100)),
        base_seed=int(raw.get("base_seed", 0)),
        noise_mode=noise_mode,
        log_failure=log_failure,
        eta=dict(eta_raw),
        workers=int(raw.get("workers", 1)),
    )
    cfg.system_model()  # validates drift antisymmetry and mu0 orthonormality
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def s2_default_config(**overrides) -> ExperimentConfig:
    """Sphere benchmark: the drift/initial values of the bundled S^2 study."""
    raw = {
        "mode": MODE_SINGLE,
        "manifold": {"n": 3, "k": 1},
        "drift": [[0.0, 0.263, 0.036],
                  [-0.263, 0.0, -0.653],
                  [-0.036, 0.653, 0.0]],
        "mu0": [[0.0], [0.0], [1.0]],
        "nu2": 1.0,
        "xi2": 0.1,
        "sigma02": 0.1,
    }
    raw.update(overrides)
    return config_from_dict(raw)


def st42_default_config(**overrides) -> ExperimentConfig:
    """St(4,2) benchmark drift/initial values."""
    raw = {
        "mode": MODE_SINGLE,
        "manifold": {"n": 4, "k": 2},
        "drift": [[0.0, 0.173, 0.267, -0.288],
                  [-0.173, 0.0, -0.279, 0.122],
                  [-0.267, 0.279, 0.0, 0.316],
                  [0.288, -0.122, -0.316, 0.0]],
        "mu0": [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]],
        "nu2": 1.0,
        "xi2": 0.1,
        "sigma02": 0.1,
    }
    raw.update(overrides)
    return config_from_dict(raw)


def realization_rng(base_seed: int, cell_index: int, rep_index: int) -> np.random.Generator:
    """Derived stream for one realization (documented in FORMATS.md)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=base_seed, spawn_key=(cell_index, rep_index))
    )


def resolve_eta_table(config: ExperimentConfig) -> EtaTable:
    """Load the configured table, or build one for the config's manifold."""
    eta_cfg = config.eta
    if "path" in eta_cfg:
        table = EtaTable.load(eta_cfg["path"])
        if table.manifold != (config.n, config.k):
            raise ConfigError(
                f"eta table at {eta_cfg['path']} is for St{table.manifold}"
            )
        return table
    grid = default_grid(
        lo=float(eta_cfg.get("grid_min", 1e-4)),
        hi=float(eta_cfg.get("grid_max", 2.0)),
        nodes=int(eta_cfg.get("nodes", 64)),
    )
    # the harness opts into a wider truncation budget than the estimator's
    # default: the standard grid tops out where the projected normal has
    # >1% mass beyond the safety radius, far above the filter's operating
    # variances (documented in FORMATS.md)
    return build_eta_table(
        config.n, config.k, grid=grid,
        n_draws=int(eta_cfg.get("draws", 200_000)),
        base_seed=int(eta_cfg.get("seed", config.base_seed)),
        reject_budget=float(eta_cfg.get("reject_budget", 0.05)),
    )


# ---------------------------------------------------------------------------
# Single realization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RealizationResult:
    meas_errors: np.ndarray     # per-epoch geodesic distance truth -> Z
    filter_errors: np.ndarray   # per-epoch geodesic distance truth -> mean
    gains: np.ndarray
    skipped: np.ndarray


def run_realization(model: SystemModel, config: ExperimentConfig,
                    ekf: StiefelEKF, rng) -> tuple[RealizationResult, object, object, list]:
    """Simulate one trajectory, measure it, filter it, score it."""
    traj = simulate_trajectory(model, config.dt, config.n_steps, rng)
    idx = config.measurement_indices
    series = simulate_measurements(traj, model, idx, rng, config.noise_mode)
    track = ekf.run(series)
    truth = traj.projected[idx]
    means = np.stack([step.belief.mean for step in track])
    meas_d, ok_m = _dist_many(truth, series.values, config.k)
    filt_d, ok_f = _dist_many(truth, means, config.k)
    if not (ok_m.all() and ok_f.all()):
        raise StiefelKFError("error-metric distance failed to converge")
    result = RealizationResult(
        meas_errors=meas_d,
        filter_errors=filt_d,
        gains=np.array([step.gain for step in track]),
        skipped=np.array([step.skipped for step in track]),
    )
    return result, traj, series, track


def filtered_track_csv(track, model: SystemModel,
                       header_lines: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write(f"# n={model.n} k={model.k}\n")
    writer = csv.writer(buf, lineterminator="\n")
    names = [f"m{i + 1}{j + 1}" for i in range(model.n) for j in range(model.k)]
    writer.writerow(["time"] + names
                    + ["gain", "intrinsic_var", "ambient_var", "skipped"])
    for step in track:
        writer.writerow(
            [repr(float(step.time))]
            + [repr(float(v)) for v in step.belief.mean.ravel()]
            + [repr(float(step.gain)),
               repr(float(step.belief.intrinsic_var)),
               repr(float(step.belief.ambient_var)),
               int(step.skipped)]
        )
    return buf.getvalue()


def run_single(config: ExperimentConfig, out_dir,
               eta_table: EtaTable | None = None) -> dict:
    """One seeded realization end to end; writes the four artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = eta_table if eta_table is not None else resolve_eta_table(config)
    model = config.system_model()
    ekf = StiefelEKF(model, table, on_log_failure=config.log_failure)
    rng = realization_rng(config.base_seed, 0, 0)
    result, traj, series, track = run_realization(model, config, ekf, rng)

    prov = config.provenance()
    (out / "trajectory.csv").write_text(trajectory_csv(traj, model, prov))
    (out / "measurements.csv").write_text(measurements_csv(series, model, prov))
    (out / "filtered.csv").write_text(filtered_track_csv(track, model, prov))
    summary = {
        "mean_measurement_error": float(result.meas_errors.mean()),
        "mean_filter_error": float(result.filter_errors.mean()),
        "skipped_updates": int(result.skipped.sum()),
    }
    lines = [f"# {line}" for line in prov]
    lines += [f"{key} = {value!r}" for key, value in summary.items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return summary


# ---------------------------------------------------------------------------
# SNR sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    nu2: float
    xi2: float
    snr_db: float
    snr_eta_db: float
    meas_error: float
    filter_error: float
    meas_se: float
    filter_se: float
    repetitions: int
    aborted: int
    skipped_updates: int
    valid: bool


def _run_cell(args) -> SweepCell:
    config, table, cell_index, nu2, xi2 = args
    model = config.system_model(nu2=nu2, xi2=xi2)
    ekf = StiefelEKF(model, table, on_log_failure=config.log_failure)
    meas_means, filt_means = [], []
    aborted = 0
    skipped = 0
    for rep in range(config.repetitions):
        rng = realization_rng(config.base_seed, cell_index, rep)
        try:
            result, *_ = run_realization(model, config, ekf, rng)
        except StiefelKFError:
            aborted += 1
            continue
        meas_means.append(result.meas_errors.mean())
        filt_means.append(result.filter_errors.mean())
        skipped += int(result.skipped.sum())
    reps_ok = len(meas_means)
    meas = np.array(meas_means)
    filt = np.array(filt_means)

    def se(a: np.ndarray) -> float:
        return float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan")

    snr_db = 10.0 * np.log10(nu2 / xi2)
    try:
        snr_eta_db = 10.0 * np.log10(table.forward(nu2) / xi2)
    except StiefelKFError:
        snr_eta_db = float("nan")
    return SweepCell(
        nu2=nu2, xi2=xi2,
        snr_db=float(snr_db), snr_eta_db=float(snr_eta_db),
        meas_error=float(meas.mean()) if reps_ok else float("nan"),
        filter_error=float(filt.mean()) if reps_ok else float("nan"),
        meas_se=se(meas), filter_se=se(filt),
        repetitions=reps_ok,
        aborted=aborted,
        skipped_updates=skipped,
        valid=aborted <= 0.05 * config.repetitions,
    )


def run_snr_sweep(config: ExperimentConfig, out_dir,
                  eta_table: EtaTable | None = None) -> list[SweepCell]:
    """The full (nu^2, xi^2) grid with seeded repetitions per cell.

    Cell means reduce in fixed realization order (order-independent of any
    parallelism, which is across cells only).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = eta_table if eta_table is not None else resolve_eta_table(config)
    jobs = []
    cell_index = 0
    for nu2 in config.nu2_values:
        for divisor in config.snr_divisors:
            jobs.append((config, table, cell_index, nu2, nu2 / divisor))
            cell_index += 1
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]

    prov = config.provenance()
    (out / "sweep.csv").write_text(sweep_csv(cells, prov))
    (out / "table_shaped.csv").write_text(table_shaped_csv(config, cells, prov))
    return cells


def sweep_csv(cells: list[SweepCell], header_lines: list[str]) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "nu2", "xi2", "snr_db", "snr_eta_db",
        "meas_error", "filter_error", "meas_se", "filter_se",
        "repetitions", "aborted", "skipped_updates", "valid",
        "meas_error_2dp", "filter_error_2dp",
    ])
    for c in cells:
        writer.writerow([
            repr(c.nu2), repr(c.xi2), repr(c.snr_db), repr(c.snr_eta_db),
            repr(c.meas_error), repr(c.filter_error),
            repr(c.meas_se), repr(c.filter_se),
            c.repetitions, c.aborted, c.skipped_updates, int(c.valid),
            f"{c.meas_error:.2f}", f"{c.filter_error:.2f}",
        ])
    return buf.getvalue()


def table_shaped_csv(config: ExperimentConfig, cells: list[SweepCell],
                     header_lines: list[str]) -> str:
    """Rows nu^2 x {meas, filter}, columns the SNR ladder (pivoted error table)."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    snr_cols = [f"{10.0 * np.log10(d):.2f}" for d in config.snr_divisors]
    writer.writerow(["nu2", "series"] + snr_cols)
    ncols = len(config.snr_divisors)
    for i, nu2 in enumerate(config.nu2_values):
        row_cells = cells[i * ncols:(i + 1) * ncols]
        writer.writerow([repr(nu2), "meas"] + [f"{c.meas_error:.2f}" for c in row_cells])
        writer.writerow([repr(nu2), "filter"] + [f"{c.filter_error:.2f}" for c in row_cells])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Eta-table building
# ---------------------------------------------------------------------------

def run_eta_build(config: ExperimentConfig, out_dir) -> EtaTable:
    """Build, serialize and diagnose the eta table for the config manifold."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = resolve_eta_table(config)
    table.save(out / "eta_table.json")
    prov = config.provenance()
    buf = io.StringIO()
    for line in prov:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sigma2", "eta", "std_error"])
    for s2, val, err in zip(table.grid, table.values, table.std_errors):
        writer.writerow([repr(float(s2)), repr(float(val)), repr(float(err))])
    (out / "eta_curve.csv").write_text(buf.getvalue())

    diffs = np.diff(table.values)
    lines = [f"# {line}" for line in prov]
    lines += [
        f"nodes = {table.grid.size}",
        f"draws_per_node = {table.n_draws}",
        f"monotone = {bool(np.all(diffs > 0))}",
        f"min_increment = {float(diffs.min())!r}",
        f"max_std_error = {float(table.std_errors.max())!r}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return table
