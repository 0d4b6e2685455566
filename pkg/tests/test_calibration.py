import numpy as np
import pytest

from coptact.calibration import (
    CalibConfig,
    CalibSample,
    calib_loss,
    calib_loss_gradient,
    calibrate,
    dataset_loss,
    samples,
)
from coptact.errors import AllSamplesSkipped, EmptyDataset
from coptact.geometry import is_rotation, svd_project
from coptact.kinematics import equilibrium_torque, forward_kinematics, point_jacobian
from coptact.sensor_model import TaxelReading, taxels_to_cop
from coptact.synthetic import CalibDataset, ContactSpec, perturb_orientations, sample_contacts, synthesize_dataset

Q_NOMINAL = np.array([0.1, 0.4, 0.5, 0.3])


@pytest.fixture(scope="module")
def bench(cap_layout, finger):
    rng = np.random.default_rng(0)
    true = perturb_orientations(cap_layout.orientations, np.radians(20), rng)
    contacts = sample_contacts(cap_layout, ContactSpec(seed=1), 60)
    data = synthesize_dataset(contacts, cap_layout, true, finger, Q_NOMINAL)
    return data, true


def subset(data, idx):
    idx = np.atleast_1d(idx)
    return CalibDataset(data.t[idx], data.q[idx], data.tau[idx], data.forces[idx])


def pipeline_loss(params, sample, layout, chain):
    """Re-implementation of the torque-matching loss from the building blocks."""
    rot = np.array([svd_project(p) for p in params])
    lay = layout.with_orientations(rot)
    c = taxels_to_cop(sample.reading, lay)
    pose = forward_kinematics(chain, sample.q)
    p = pose.rotation @ c.position + pose.translation
    tau = equilibrium_torque(point_jacobian(chain, sample.q, p), pose.rotation @ c.force)
    return np.sum((tau - sample.tau) ** 2) / len(tau)


class TestLoss:
    def test_zero_at_ground_truth(self, bench, cap_layout, finger):
        data, true = bench
        for s in list(samples(data))[:10]:
            assert calib_loss(true, s, cap_layout, finger) < 1e-10
        assert dataset_loss(true, data, cap_layout, finger) < 1e-10

    def test_empty_reading_and_zero_torque(self, cap_layout, finger):
        s = CalibSample(TaxelReading(np.zeros((24, 3))), Q_NOMINAL, np.zeros(4))
        assert calib_loss(cap_layout.orientations, s, cap_layout, finger) == 0.0

    def test_identity_init_positive_and_matches_pipeline(self, bench, cap_layout, finger):
        data, _ = bench
        ident = np.tile(np.eye(3), (24, 1, 1))
        for k in range(5):
            s = next(iter(samples(subset(data, k))))
            value = calib_loss(ident, s, cap_layout, finger)
            assert value > 0
            assert value == pytest.approx(pipeline_loss(ident, s, cap_layout, finger), rel=1e-12)
            assert dataset_loss(ident, subset(data, k), cap_layout, finger) == pytest.approx(value, rel=1e-9)

    def test_batched_equals_mean_of_samples(self, bench, cap_layout, finger):
        data, _ = bench
        params = cap_layout.orientations + 0.1
        each = [calib_loss(params, s, cap_layout, finger) for s in samples(data)]
        assert dataset_loss(params, data, cap_layout, finger) == pytest.approx(np.mean(each), rel=1e-10)

    def test_skipped_samples_excluded_from_mean(self, bench, cap_layout, finger):
        data, _ = bench
        params = cap_layout.orientations + 0.1
        padded = CalibDataset(
            np.append(data.t[:5], 9.0), np.vstack([data.q[:5], Q_NOMINAL]), np.vstack([data.tau[:5], np.ones(4)]),
            np.concatenate([data.forces[:5], np.zeros((1, 24, 3))]),
        )
        assert dataset_loss(params, padded, cap_layout, finger) == pytest.approx(
            dataset_loss(params, subset(data, np.arange(5)), cap_layout, finger), rel=1e-14
        )


class TestGradient:
    def fd(self, params, data, layout, chain, idx, h=1e-6):
        g = np.zeros_like(params)
        for i in idx:
            for a in range(3):
                for b in range(3):
                    e = np.zeros_like(params)
                    e[i, a, b] = h
                    g[i, a, b] = (dataset_loss(params + e, data, layout, chain) - dataset_loss(params - e, data, layout, chain)) / (2 * h)
        return g

    def test_stationary_at_ground_truth(self, bench, cap_layout, finger):
        data, true = bench
        assert np.linalg.norm(calib_loss_gradient(true, data, cap_layout, finger)) < 1e-6

    def test_single_sample_matches_finite_differences(self, bench, cap_layout, finger):
        data, true = bench
        one = subset(data, 3)
        params = true + 0.05 * np.random.default_rng(4).standard_normal(true.shape)
        g = calib_loss_gradient(params, one, cap_layout, finger)
        touched = np.flatnonzero(np.abs(g).sum(axis=(1, 2)))
        num = self.fd(params, one, cap_layout, finger, touched)
        assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-4

    def test_full_batch_is_mean_of_per_sample(self, bench, cap_layout, finger):
        data, _ = bench
        params = cap_layout.orientations + 0.05
        small = subset(data, np.arange(6))
        each = [calib_loss_gradient(params, subset(data, k), cap_layout, finger) for k in range(6)]
        assert np.allclose(calib_loss_gradient(params, small, cap_layout, finger), np.mean(each, axis=0), atol=1e-12)

    def test_all_skipped(self, cap_layout, finger):
        empty = CalibDataset([0.0], [Q_NOMINAL], [np.zeros(4)], np.zeros((1, 24, 3)))
        with pytest.raises(AllSamplesSkipped):
            calib_loss_gradient(cap_layout.orientations, empty, cap_layout, finger)


class TestCalibrate:
    def test_identity_generated_data_stays_zero(self, cap_layout, finger):
        ident = np.tile(np.eye(3), (24, 1, 1))
        contacts = sample_contacts(cap_layout, ContactSpec(seed=5), 30)
        data = synthesize_dataset(contacts, cap_layout, ident, finger, Q_NOMINAL)
        report = calibrate(data, cap_layout, finger, CalibConfig(steps=10, init="identity"))
        assert max(report.loss_history) < 1e-10
        assert report.final_loss < 1e-10

    def test_recovers_rotations(self, bench, cap_layout, finger):
        data, true = bench
        report = calibrate(data, cap_layout, finger, CalibConfig(steps=60), true_orientations=true)
        assert len(report.loss_history) == 60
        assert report.final_loss < 1e-2 * report.loss_history[0]
        assert np.median(report.geodesic_errors) < np.median(report.initial_geodesic_errors)
        assert all(is_rotation(r) for r in report.final_rotations)

    def test_deterministic(self, bench, cap_layout, finger):
        data, _ = bench
        a = calibrate(data, cap_layout, finger, CalibConfig(steps=5, init="random", seed=3))
        b = calibrate(data, cap_layout, finger, CalibConfig(steps=5, init="random", seed=3))
        assert a.loss_history == b.loss_history
        assert np.array_equal(a.final_rotations, b.final_rotations)

    def test_single_step(self, bench, cap_layout, finger):
        data, _ = bench
        report = calibrate(data, cap_layout, finger, CalibConfig(steps=1))
        assert len(report.loss_history) == 1
        assert report.to_dict()["skipped_count"] == 0

    def test_empty_dataset(self, cap_layout, finger):
        empty = CalibDataset(np.zeros(0), np.zeros((0, 4)), np.zeros((0, 4)), np.zeros((0, 24, 3)))
        with pytest.raises(EmptyDataset):
            calibrate(empty, cap_layout, finger)

    @pytest.mark.parametrize("kw", [{"learning_rate": 0.0}, {"steps": 0}, {"init": "zeros"}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            CalibConfig(**kw)
