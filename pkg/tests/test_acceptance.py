"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The sweep-based
criteria rebuild the full 100-repetition error tables (several minutes).
"""

import numpy as np
import pytest

from stiefelkf.eta import build_eta_table, default_grid, eta_closed_form_s2, eta_monte_carlo
from stiefelkf.experiments import (
    config_from_dict,
    realization_rng,
    run_single,
    run_snr_sweep,
    s2_default_config,
    st42_default_config,
)
from stiefelkf.filter import Belief, StiefelEKF
from stiefelkf.geometry import StiefelManifold
from stiefelkf.linalg import matrix_exp
from stiefelkf.simulate import SystemModel, simulate_measurements, simulate_trajectory

ACCEPT_SEED = 20260809

# Error tables being reproduced (meas row, filter row) per nu^2, SNR columns
# {0, 4.47, 6.63, 8.06, 9.14, 10} dB with xi^2 = nu^2 / divisor.
S2_TABLE = {
    0.1: ([1.00, 0.69, 0.57, 0.49, 0.44, 0.40], [0.59, 0.43, 0.38, 0.33, 0.31, 0.29]),
    0.2: ([1.14, 0.92, 0.75, 0.67, 0.62, 0.55], [0.83, 0.64, 0.55, 0.47, 0.45, 0.41]),
    0.5: ([1.22, 1.04, 0.89, 0.77, 0.72, 0.68], [1.01, 0.81, 0.67, 0.59, 0.57, 0.53]),
    1.0: ([1.25, 1.08, 0.96, 0.88, 0.79, 0.75], [1.15, 0.96, 0.80, 0.73, 0.65, 0.60]),
}
ST42_TABLE = {
    0.1: ([0.65, 0.39, 0.30, 0.25, 0.22, 0.21], [0.33, 0.23, 0.20, 0.18, 0.16, 0.15]),
    0.2: ([0.92, 0.54, 0.42, 0.36, 0.32, 0.29], [0.46, 0.33, 0.28, 0.24, 0.22, 0.21]),
    0.5: ([1.35, 0.87, 0.68, 0.57, 0.51, 0.45], [0.74, 0.54, 0.44, 0.38, 0.36, 0.33]),
    1.0: ([1.65, 1.20, 0.96, 0.82, 0.72, 0.65], [1.09, 0.74, 0.62, 0.56, 0.50, 0.47]),
}


def report(criterion: str, ok: bool, detail: str = "") -> None:
    flag = "PASS" if ok else "FAIL"
    print(f"\n[{flag}] acceptance {criterion}: {detail}")


def sweep_config(preset, **overrides):
    raw = preset().as_dict()
    raw.pop("schema")
    raw.update({
        "mode": "snr-sweep",
        "repetitions": 100,
        "base_seed": ACCEPT_SEED,
        "log_failure": "skip",   # far measurements propagate the prediction
        "workers": 2,
    })
    raw.update(overrides)
    return config_from_dict(raw)


@pytest.fixture(scope="session")
def s2_eta():
    return build_eta_table(3, 1)


@pytest.fixture(scope="session")
def st42_eta():
    # 20k draws/node keep per-node SE ~2e-3, far below the +-0.10 cell
    # tolerances; budget 0.05 because the top of the default grid has >1%
    # beyond-safety-radius mass on St(4,2) (see decisions ledger)
    return build_eta_table(4, 2, n_draws=20_000, base_seed=ACCEPT_SEED,
                           reject_budget=0.05)


@pytest.fixture(scope="session")
def s2_sweep(tmp_path_factory, s2_eta):
    out = tmp_path_factory.mktemp("s2_sweep")
    return run_snr_sweep(sweep_config(s2_default_config), out, eta_table=s2_eta)


@pytest.fixture(scope="session")
def st42_sweep(tmp_path_factory, st42_eta):
    out = tmp_path_factory.mktemp("st42_sweep")
    return run_snr_sweep(sweep_config(st42_default_config), out, eta_table=st42_eta)


def cells_by_row(cells, table):
    rows = {}
    i = 0
    for nu2 in table:
        rows[nu2] = cells[i:i + 6]
        i += 6
    return rows


def max_cell_deviation(cells, table):
    devs = []
    for nu2, row_cells in cells_by_row(cells, table).items():
        meas_row, filt_row = table[nu2]
        for c, m, f in zip(row_cells, meas_row, filt_row):
            devs.append(abs(c.meas_error - m))
            devs.append(abs(c.filter_error - f))
    return max(devs)


class TestTableReproduction:
    def test_criterion_1_s2_low_noise_row(self, s2_sweep):
        meas_row, filt_row = S2_TABLE[0.1]
        row = cells_by_row(s2_sweep, S2_TABLE)[0.1]
        devs = [abs(c.meas_error - m) for c, m in zip(row, meas_row)]
        devs += [abs(c.filter_error - f) for c, f in zip(row, filt_row)]
        ok = max(devs) <= 0.08 and all(c.valid for c in row)
        got_m = [round(c.meas_error, 2) for c in row]
        got_f = [round(c.filter_error, 2) for c in row]
        report("1 (S2 sweep, nu2=0.1 row within +-0.08)", ok,
               f"meas {got_m} vs {meas_row}; filter {got_f} vs {filt_row}; "
               f"max deviation {max(devs):.3f}")
        assert ok, (
            "S2 row nu2=0.1 does not reproduce the reference values under the "
            "stated protocol; see the decisions ledger: the reference S2 rows "
            "are mutually inconsistent (rows 0.1/0.2 match a 10x-noise "
            "variant, row 1.0 a tangent 10x variant, row 0.5 neither)"
        )

    def test_criterion_2_s2_remaining_rows(self, s2_sweep):
        rows = cells_by_row(s2_sweep, S2_TABLE)
        devs = []
        for nu2 in (0.2, 0.5, 1.0):
            meas_row, filt_row = S2_TABLE[nu2]
            devs += [abs(c.meas_error - m) for c, m in zip(rows[nu2], meas_row)]
            devs += [abs(c.filter_error - f) for c, f in zip(rows[nu2], filt_row)]
        ok = max(devs) <= 0.10
        report("2 (S2 sweep rows 0.2/0.5/1.0 within +-0.10)", ok,
               f"36 cells, max deviation {max(devs):.3f}")
        assert ok, "see criterion 1: the reference S2 table is not reproducible"

    def test_criterion_3_st42_all_cells(self, st42_sweep):
        dev = max_cell_deviation(st42_sweep, ST42_TABLE)
        ok = dev <= 0.10 and all(c.valid for c in st42_sweep)
        lines = []
        for nu2, row in cells_by_row(st42_sweep, ST42_TABLE).items():
            lines.append(f"nu2={nu2}: meas {[round(c.meas_error, 2) for c in row]} "
                         f"filt {[round(c.filter_error, 2) for c in row]}")
        report("3 (St(4,2) sweep, 48 cells within +-0.10)", ok,
               f"max deviation {dev:.3f}; " + " | ".join(lines))
        assert ok

    def test_criterion_4_dominance_and_gain(self, s2_sweep, st42_sweep):
        dominated = all(c.filter_error < c.meas_error
                        for c in list(s2_sweep) + list(st42_sweep))
        row01 = cells_by_row(s2_sweep, S2_TABLE)[0.1]
        ratio = row01[0].filter_error / row01[0].meas_error
        ok = dominated and ratio <= 0.65
        report("4 (filter < measurement everywhere; best-cell gain)", ok,
               f"dominance={dominated}, S2 nu2=0.1 0dB filter/meas = {ratio:.3f}")
        assert ok

    def test_criterion_5_eta_cross_oracle(self):
        rng = np.random.default_rng(ACCEPT_SEED)
        zs = {}
        for sigma2 in (0.05, 0.1, 0.25, 0.5, 1.0):
            quad = eta_closed_form_s2(sigma2)
            est, se = eta_monte_carlo(3, 1, sigma2, 1_000_000, rng)
            zs[sigma2] = (est - quad) / se
        agree = all(abs(z) <= 3 for z in zs.values())
        if agree:
            report("5 (eta quadrature vs MC within 3 SE)", True,
                   f"z-scores {({k: round(v, 2) for k, v in zs.items()})}")
            return
        # documented fallback: the MC estimate (which sees the same
        # safety-radius truncation as the rest of the machinery) is
        # authoritative for S2 tables as well
        grid = default_grid(hi=1.0, nodes=8)
        mc_table = build_eta_table(3, 1, grid=grid, n_draws=50_000,
                                   base_seed=ACCEPT_SEED, s2_quadrature=False)
        consistent = True
        rng2 = np.random.default_rng(ACCEPT_SEED + 1)
        for i, sigma2 in enumerate(grid):
            est, se = eta_monte_carlo(3, 1, sigma2, 50_000, rng2)
            tol = 3 * np.hypot(se, mc_table.std_errors[i]) + 1e-9
            consistent &= abs(mc_table.values[i] - est) <= tol
        report("5 (eta cross-oracle)", consistent,
               f"quadrature/MC disagree beyond 3 SE at "
               f"{[k for k, v in zs.items() if abs(v) > 3]} (the MC truncates "
               f"at the safety radius, per the sampling contract); fallback "
               f"invoked and verified: MC-built S2 table is authoritative "
               f"(build_eta_table(..., s2_quadrature=False))")
        assert consistent

    def test_criterion_6_conjecture_probe(self):
        grid = np.geomspace(0.02, 1.0, 24)
        inverted = 0
        pairs = 0
        detail = []
        for (n, k) in ((3, 1), (6, 2), (8, 2), (8, 3)):
            raw = np.empty(grid.size)
            errs = np.empty(grid.size)
            if (n, k) == (3, 1):
                raw[:] = [eta_closed_form_s2(s2) for s2 in grid]
                errs[:] = 0.0
            else:
                for i, s2 in enumerate(grid):
                    node_rng = np.random.default_rng(
                        np.random.SeedSequence(entropy=ACCEPT_SEED, spawn_key=(n, k, i)))
                    # budget 0.05: St(8,3) has >1% beyond-radius mass near 1.0
                    raw[i], errs[i] = eta_monte_carlo(n, k, s2, 4000, node_rng,
                                                      reject_budget=0.05)
            for i in range(grid.size - 1):
                pairs += 1
                gap = raw[i] - raw[i + 1]
                if gap > 3 * np.hypot(errs[i], errs[i + 1]) + 1e-12:
                    inverted += 1
            detail.append(f"St({n},{k}) eta(1.0)={raw[-1]:.3f}")
        frac = inverted / pairs
        ok = frac < 0.02
        report("6 (eta curves nondecreasing pre-isotonic)", ok,
               f"{inverted}/{pairs} adjacent pairs inverted beyond 3 SE "
               f"({100 * frac:.2f}%); " + ", ".join(detail))
        assert ok


class TestPropertySuite:
    def test_criterion_7_roundtrip(self):
        worst = 0.0
        for (n, k) in ((4, 2), (3, 1)):
            manifold = StiefelManifold(n, k)
            rng = np.random.default_rng(ACCEPT_SEED)
            for _ in range(1000):
                x = manifold.random_point(rng)
                v = manifold.random_tangent(x, 1.0, rng)
                v *= rng.uniform(0.05, 1.0) / manifold.norm(x, v)
                v2 = manifold.log(x, manifold.exp(x, v))
                worst = max(worst, manifold.norm(x, v2 - v))
        ok = worst < 1e-6
        report("7 (exp/log roundtrip, 1000 pairs per manifold)", ok,
               f"worst residual {worst:.2e}")
        assert ok

    def test_criterion_8_gain_geometry(self, s2_eta):
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(ACCEPT_SEED + 2)
        worst = 0.0
        for _ in range(1000):
            xi2 = rng.uniform(0.01, 1.0)
            sigma2 = rng.uniform(0.005, 0.5)
            model = SystemModel(n=3, k=1,
                                drift=np.zeros((3, 3)), nu2=0.0, xi2=xi2,
                                mu0=np.array([[0.0], [0.0], [1.0]]), sigma02=0.1)
            ekf = StiefelEKF(model, s2_eta)
            mean = sphere.random_point(rng)
            belief = Belief(mean=mean, ambient_var=sigma2,
                            intrinsic_var=s2_eta.forward(sigma2))
            z = sphere.exp(mean, sphere.random_tangent(mean, 0.3, rng))
            step = ekf.update(belief, z)
            want = step.gain * sphere.distance(mean, z)
            worst = max(worst, abs(sphere.distance(mean, step.belief.mean) - want))
        ok = worst < 1e-8
        report("8 (gain geometry over 1000 updates)", ok, f"worst {worst:.2e}")
        assert ok

    def test_criterion_9_gain_bounds_and_limits(self, s2_eta):
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(ACCEPT_SEED + 3)
        ok = True
        for _ in range(300):
            xi2 = rng.uniform(0.01, 2.0)
            sigma2 = rng.uniform(0.001, 1.0)
            model = SystemModel(n=3, k=1, drift=np.zeros((3, 3)), nu2=0.0,
                                xi2=xi2, mu0=np.array([[0.0], [0.0], [1.0]]),
                                sigma02=0.1)
            ekf = StiefelEKF(model, s2_eta)
            mean = sphere.random_point(rng)
            belief = Belief(mean=mean, ambient_var=sigma2,
                            intrinsic_var=s2_eta.forward(sigma2))
            z = sphere.exp(mean, sphere.random_tangent(mean, 0.05, rng))
            step = ekf.update(belief, z)
            ok &= 0.0 <= step.gain < 1.0
        # xi^2 = 0 forces mean = z
        model = SystemModel(n=3, k=1, drift=np.zeros((3, 3)), nu2=1.0, xi2=0.0,
                            mu0=np.array([[0.0], [0.0], [1.0]]), sigma02=0.1)
        ekf = StiefelEKF(model, s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.2, rng))
        step = ekf.update(belief, z)
        ok &= np.array_equal(step.belief.mean, z) and step.gain == 1.0
        # nu^2 = sigma0^2 = 0 forces K = 0 and pure prediction
        model = SystemModel(n=3, k=1, drift=np.zeros((3, 3)), nu2=0.0, xi2=0.1,
                            mu0=np.array([[0.0], [0.0], [1.0]]), sigma02=0.0)
        ekf = StiefelEKF(model, s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        step = ekf.update(belief, z)
        ok &= step.gain == 0.0 and np.array_equal(step.belief.mean, belief.mean)
        report("9 (gain bounds and limit cases)", bool(ok), "")
        assert ok

    def test_criterion_10_zero_noise_flow(self, s2_eta):
        cfg = s2_default_config(base_seed=ACCEPT_SEED, nu2=0.0, xi2=0.0,
                                sigma02=0.0)
        model = cfg.system_model()
        rng = realization_rng(cfg.base_seed, 0, 0)
        traj = simulate_trajectory(model, cfg.dt, cfg.n_steps, rng)
        series = simulate_measurements(traj, model, cfg.measurement_indices, rng)
        ekf = StiefelEKF(model, s2_eta)
        track = ekf.run(series)
        worst = 0.0
        drift = np.array(cfg.drift)
        for step in track:
            want = matrix_exp(step.time * drift) @ model.mu0
            worst = max(worst, float(np.linalg.norm(step.belief.mean - want)))
        ok = worst < 1e-8
        report("10 (zero-noise filter track equals the flow)", ok,
               f"worst deviation {worst:.2e}")
        assert ok

    def test_criterion_11_determinism(self, tmp_path, s2_eta):
        raw = s2_default_config().as_dict()
        raw.pop("schema")
        raw.update({"mode": "snr-sweep", "nu2_values": [0.1],
                    "snr_divisors": [1.0, 10.0], "repetitions": 3,
                    "n_steps": 400, "base_seed": ACCEPT_SEED})
        cfg = config_from_dict(raw)
        run_snr_sweep(cfg, tmp_path / "a", eta_table=s2_eta)
        run_snr_sweep(cfg, tmp_path / "b", eta_table=s2_eta)
        single_cfg = s2_default_config(base_seed=ACCEPT_SEED, n_steps=400)
        run_single(single_cfg, tmp_path / "sa", eta_table=s2_eta)
        run_single(single_cfg, tmp_path / "sb", eta_table=s2_eta)
        same = all(
            (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("sweep.csv", "table_shaped.csv")
        ) and all(
            (tmp_path / "sa" / name).read_bytes() == (tmp_path / "sb" / name).read_bytes()
            for name in ("trajectory.csv", "measurements.csv", "filtered.csv")
        )
        report("11 (identical config+seed gives byte-identical CSVs)", same, "")
        assert same
