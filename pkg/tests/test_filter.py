import numpy as np
import pytest

from stiefelkf.eta import build_eta_table, default_grid
from stiefelkf.exceptions import DomainError, InjectivityRadiusError
from stiefelkf.filter import Belief, StiefelEKF
from stiefelkf.geometry import StiefelManifold
from stiefelkf.linalg import matrix_exp
from stiefelkf.simulate import (
    MeasurementSeries,
    SystemModel,
    simulate_measurements,
    simulate_trajectory,
)

A_S2 = np.array([[0.0, 0.263, 0.036],
                 [-0.263, 0.0, -0.653],
                 [-0.036, 0.653, 0.0]])
MU0_S2 = np.array([[0.0], [0.0], [1.0]])


@pytest.fixture(scope="module")
def s2_eta():
    return build_eta_table(3, 1, grid=default_grid(nodes=48))


def s2_model(**kw):
    params = dict(n=3, k=1, drift=A_S2, nu2=1.0, xi2=0.1, mu0=MU0_S2, sigma02=0.1)
    params.update(kw)
    return SystemModel(**params)


def make_series(times, values):
    return MeasurementSeries(times=np.asarray(times, dtype=float),
                             indices=np.zeros(len(times), dtype=int),
                             values=np.asarray(values, dtype=float))


class TestPredict:
    def test_zero_gap_is_identity(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        belief = ekf.initial_belief()
        assert ekf.predict(belief, 0.0) is belief

    def test_zero_process_noise_rotates_mean_only(self, s2_eta):
        ekf = StiefelEKF(s2_model(nu2=0.0), s2_eta)
        belief = ekf.initial_belief()
        out = ekf.predict(belief, 0.4)
        assert out.ambient_var == pytest.approx(belief.ambient_var)
        want = matrix_exp(0.4 * A_S2) @ MU0_S2
        assert np.linalg.norm(out.mean - want) < 1e-10

    def test_variance_hand_arithmetic(self, s2_eta):
        # sigma0^2 = 0.1, t = 0.05, nu^2 = 1 -> 0.15
        ekf = StiefelEKF(s2_model(nu2=1.0, sigma02=0.1), s2_eta)
        out = ekf.predict(ekf.initial_belief(), 0.05)
        assert out.ambient_var == pytest.approx(0.15, abs=1e-15)
        assert out.intrinsic_var == pytest.approx(s2_eta.forward(0.15), rel=1e-12)

    def test_negative_gap_rejected(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        with pytest.raises(DomainError):
            ekf.predict(ekf.initial_belief(), -0.1)


class TestUpdate:
    def test_perfect_measurement(self, s2_eta):
        # xi^2 = 0 forces K = 1, mean = z, intrinsic variance 0
        ekf = StiefelEKF(s2_model(xi2=0.0), s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        rng = np.random.default_rng(0)
        sphere = StiefelManifold(3, 1)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.01, rng))
        step = ekf.update(belief, z)
        assert step.gain == 1.0
        assert np.array_equal(step.belief.mean, z)
        assert step.belief.intrinsic_var == 0.0
        assert step.belief.ambient_var == 0.0

    def test_useless_measurement_limit(self, s2_eta):
        # enormous xi^2: K ~ 0, mean stays at the prediction
        ekf = StiefelEKF(s2_model(xi2=1e12), s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        rng = np.random.default_rng(1)
        sphere = StiefelManifold(3, 1)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.3, rng))
        step = ekf.update(belief, z)
        assert step.gain < 1e-9
        assert np.linalg.norm(step.belief.mean - belief.mean) < 1e-9

    def test_hand_case_gain_and_geodesic_parameter(self, s2_eta):
        # sigma0^2=0.1, t=0.05, nu^2=1, xi^2=0.1: S=0.25, K=0.6; the fused
        # mean sits at 60% of the geodesic from prediction to measurement
        ekf = StiefelEKF(s2_model(nu2=1.0, xi2=0.1, sigma02=0.1), s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(2)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.2, rng))
        step = ekf.update(belief, z)
        assert step.gain == pytest.approx(0.6, abs=1e-12)
        d_full = sphere.distance(belief.mean, z)
        d_frac = sphere.distance(belief.mean, step.belief.mean)
        assert d_frac == pytest.approx(0.6 * d_full, abs=1e-8)

    def test_gain_geometry_randomized(self, s2_eta):
        # distance(pred, fused) = K * distance(pred, z) over random updates
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(1000):
            xi2 = rng.uniform(0.01, 1.0)
            sigma2 = rng.uniform(0.005, 0.5)
            ekf = StiefelEKF(s2_model(xi2=xi2), s2_eta)
            mean = sphere.random_point(rng)
            belief = Belief(mean=mean, ambient_var=sigma2,
                            intrinsic_var=s2_eta.forward(sigma2))
            z = sphere.exp(mean, sphere.random_tangent(mean, 0.3, rng))
            step = ekf.update(belief, z)
            want = step.gain * sphere.distance(mean, z)
            got = sphere.distance(mean, step.belief.mean)
            worst = max(worst, abs(got - want))
        assert worst < 1e-8

    def test_variance_contraction(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        rng = np.random.default_rng(4)
        sphere = StiefelManifold(3, 1)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.1, rng))
        step = ekf.update(belief, z)
        assert step.belief.intrinsic_var < belief.intrinsic_var
        assert step.belief.ambient_var < belief.ambient_var

    def test_gain_bounds(self, s2_eta):
        rng = np.random.default_rng(5)
        sphere = StiefelManifold(3, 1)
        for _ in range(200):
            xi2 = rng.uniform(0.01, 2.0)
            sigma2 = rng.uniform(0.001, 1.0)
            ekf = StiefelEKF(s2_model(xi2=xi2), s2_eta)
            mean = sphere.random_point(rng)
            belief = Belief(mean=mean, ambient_var=sigma2,
                            intrinsic_var=s2_eta.forward(sigma2))
            z = sphere.exp(mean, sphere.random_tangent(mean, 0.05, rng))
            step = ekf.update(belief, z)
            assert 0.0 <= step.gain < 1.0
        # sigma_pred^2 = 0 forces K = 0 and pure prediction
        ekf = StiefelEKF(s2_model(nu2=0.0, sigma02=0.0, xi2=0.1), s2_eta)
        belief = ekf.predict(ekf.initial_belief(), 0.05)
        z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.05, rng))
        step = ekf.update(belief, z)
        assert step.gain == 0.0
        assert np.array_equal(step.belief.mean, belief.mean)

    def test_far_measurement_policies(self, s2_eta):
        ekf_raise = StiefelEKF(s2_model(), s2_eta)
        ekf_skip = StiefelEKF(s2_model(), s2_eta, on_log_failure="skip")
        belief = ekf_raise.predict(ekf_raise.initial_belief(), 0.05)
        # antipodal-ish measurement, beyond the safety radius
        theta = 3.0
        z = np.array([[np.sin(theta) * 0.0], [np.sin(theta)], [np.cos(theta)]])
        z /= np.linalg.norm(z)
        assert StiefelManifold(3, 1).distance(belief.mean, z, check_radius=False) > 2.81
        with pytest.raises(InjectivityRadiusError):
            ekf_raise.update(belief, z)
        step = ekf_skip.update(belief, z)
        assert step.skipped
        assert step.belief is belief

    def test_mean_revalidates(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        belief = ekf.initial_belief()
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(6)
        for _ in range(50):
            belief = ekf.predict(belief, 0.05)
            z = sphere.exp(belief.mean, sphere.random_tangent(belief.mean, 0.05, rng))
            belief = ekf.update(belief, z).belief
            sphere.check_point(belief.mean, atol=1e-10)


class TestEuclideanConsistency:
    def test_flat_limit_matches_scalar_kalman(self, s2_eta):
        # tiny variances, points within a 1e-3 ball: the manifold update
        # must reduce to the classical scalar Kalman mean update
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(7)
        for _ in range(20):
            # in-table variances; only the gain value matters for the mean
            sigma2 = 10 ** rng.uniform(-3.5, -3.0)
            xi2 = 10 ** rng.uniform(-3.5, -3.0)
            ekf = StiefelEKF(s2_model(xi2=xi2), s2_eta)
            mean = sphere.random_point(rng)
            belief = Belief(mean=mean, ambient_var=sigma2,
                            intrinsic_var=s2_eta.forward(sigma2))
            v = sphere.random_tangent(mean, 1.0, rng)
            v *= 1e-3 / sphere.norm(mean, v)
            z = sphere.exp(mean, v)
            step = ekf.update(belief, z)
            gain = sigma2 / (sigma2 + xi2)
            # classical ambient Kalman mean, mapped to the sphere like any
            # other estimate of this measurement model
            flat = sphere.project(mean + gain * (z - mean))
            rel = np.linalg.norm(step.belief.mean - flat) / np.linalg.norm(flat - mean)
            assert rel < 1e-4


class TestRun:
    def test_empty_series_gives_empty_track(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        track = ekf.run(make_series([], np.zeros((0, 3, 1))))
        assert track == []

    def test_single_measurement_is_one_predict_update(self, s2_eta):
        model = s2_model()
        ekf = StiefelEKF(model, s2_eta)
        sphere = StiefelManifold(3, 1)
        rng = np.random.default_rng(8)
        pred = ekf.predict(ekf.initial_belief(), 0.3)
        z = sphere.exp(pred.mean, sphere.random_tangent(pred.mean, 0.1, rng))
        want = ekf.update(pred, z)
        track = ekf.run(make_series([0.3], [z]))
        assert len(track) == 1
        assert np.array_equal(track[0].belief.mean, want.belief.mean)
        assert track[0].gain == want.gain
        assert track[0].time == 0.3

    def test_zero_noise_track_follows_flow(self, s2_eta):
        # nu^2 = xi^2 = sigma0^2 = 0: the track is exactly exp(tA) mu0
        model = s2_model(nu2=0.0, xi2=0.0, sigma02=0.0)
        rng = np.random.default_rng(9)
        traj = simulate_trajectory(model, 1.0 / 2000, 2000, rng)
        idx = 100 * np.arange(1, 21)
        series = simulate_measurements(traj, model, idx, rng)
        ekf = StiefelEKF(model, s2_eta)
        track = ekf.run(series)
        for step, j in zip(track, idx):
            want = matrix_exp(traj.times[j] * A_S2) @ MU0_S2
            assert np.linalg.norm(step.belief.mean - want) < 1e-8
            assert step.belief.ambient_var == 0.0

    def test_filter_beats_measurements_on_average(self, s2_eta):
        # single-row sanity check of the headline claim
        model = s2_model(nu2=0.1, xi2=0.1)
        ekf = StiefelEKF(model, s2_eta)
        sphere = StiefelManifold(3, 1)
        meas_err, filt_err = [], []
        for rep in range(30):
            rng = np.random.default_rng(100 + rep)
            traj = simulate_trajectory(model, 1.0 / 2000, 2000, rng)
            idx = 100 * np.arange(1, 21)
            series = simulate_measurements(traj, model, idx, rng)
            track = ekf.run(series)
            for j, step, z in zip(idx, track, series.values):
                truth = traj.projected[j]
                meas_err.append(sphere.distance(truth, z, check_radius=False))
                filt_err.append(sphere.distance(truth, step.belief.mean,
                                                check_radius=False))
        assert np.mean(filt_err) < np.mean(meas_err)

    def test_non_increasing_times_rejected(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        rng = np.random.default_rng(10)
        sphere = StiefelManifold(3, 1)
        z = sphere.random_point(rng)
        with pytest.raises(DomainError):
            ekf.run(make_series([0.2, 0.2], [z, z]))

    def test_manifold_mismatch_rejected(self, s2_eta):
        from stiefelkf.exceptions import DomainError as DE
        model42 = SystemModel(
            n=4, k=2,
            drift=np.zeros((4, 4)), nu2=0.1, xi2=0.1,
            mu0=np.eye(4, 2), sigma02=0.1,
        )
        with pytest.raises(DE):
            StiefelEKF(model42, s2_eta)

    def test_get_params(self, s2_eta):
        ekf = StiefelEKF(s2_model(), s2_eta)
        params = ekf.get_params()
        assert set(params) == {"model", "eta_table", "on_log_failure"}
