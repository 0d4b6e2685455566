import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import spearmanr

from coptact.errors import DegenerateTarget, SingleCluster, SingularDesign
from coptact.probe import (
    LatentTrajectory,
    LatentTrajectorySet,
    cluster_latents,
    linear_latents,
    linear_probe_fit,
    pca_project,
    probe_predict,
    probe_score,
    silhouette_coefficient,
    silhouette_samples,
    temporal_cluster_report,
)


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


class TestLinearProbe:
    def test_exact_linear_recovery(self):
        data = linear_latents(20, 30, 8, 3, seed=0)
        w = linear_probe_fit(data, ridge=0.0)
        x, y = data.stacked()
        assert np.sqrt(np.mean((probe_predict(w, x) - y) ** 2)) < 1e-9

    def test_zero_targets(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 4))
        assert np.array_equal(linear_probe_fit((x, np.zeros((50, 2))), ridge=1e-3), np.zeros((5, 2)))

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((40, 5)), rng.standard_normal((40, 2))
        ridge = 0.7
        a = np.hstack([x, np.ones((40, 1))])
        pen = np.diag([ridge] * 5 + [0.0])
        expected = np.linalg.solve(a.T @ a + pen, a.T @ y)
        assert np.allclose(linear_probe_fit((x, y), ridge), expected, atol=1e-12)

    def test_matches_sklearn_ridge(self):
        from sklearn.linear_model import Ridge

        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((60, 6)), rng.standard_normal((60, 3))
        ref = Ridge(alpha=0.5).fit(x, y)
        w = linear_probe_fit((x, y), 0.5)
        assert np.allclose(w[:-1], ref.coef_.T, atol=1e-10)
        assert np.allclose(w[-1], ref.intercept_, atol=1e-10)

    def test_singular_design(self):
        x = np.ones((10, 3))
        with pytest.raises(SingularDesign):
            linear_probe_fit((x, np.zeros((10, 1))), ridge=0.0)


class TestScore:
    def test_perfect(self):
        data = linear_latents(5, 20, 4, 2, seed=4)
        s = probe_score(linear_probe_fit(data, 0.0), data)
        assert np.allclose(s["rmse"], 0.0, atol=1e-9) and np.allclose(s["r2"], 1.0)

    def test_mean_predictor(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal((30, 3)), rng.standard_normal((30, 2))
        w = np.zeros((4, 2))
        w[-1] = y.mean(axis=0)
        assert np.allclose(probe_score(w, (x, y))["r2"], 0.0, atol=1e-12)

    def test_noise_level(self):
        sigma = 0.2
        for seed in range(20):
            train = linear_latents(50, 40, 6, 2, seed=seed, noise=sigma)
            test = linear_latents(50, 40, 6, 2, seed=seed, noise=sigma)
            rmse = probe_score(linear_probe_fit(train, 1e-6), test)["rmse"]
            assert np.all(np.abs(rmse - sigma) < 0.1 * sigma)

    def test_constant_target(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((20, 3))
        y = np.column_stack([rng.standard_normal(20), np.full(20, 2.0)])
        w = linear_probe_fit((x, y), 1e-6)
        with pytest.raises(DegenerateTarget):
            probe_score(w, (x, y))
        loose = probe_score(w, (x, y), strict=False)
        assert np.isnan(loose["r2"][1]) and np.isfinite(loose["r2"][0])

    def test_r2_invariant_to_affine_latent_rescaling(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((80, 4))
        y = x @ rng.standard_normal((4, 2)) + 0.3 * rng.standard_normal((80, 2))
        a, b = rng.standard_normal((4, 4)) + 3 * np.eye(4), rng.standard_normal(4)
        r1 = probe_score(linear_probe_fit((x, y), 0.0), (x, y))["r2"]
        r2 = probe_score(linear_probe_fit((x @ a + b, y), 0.0), (x @ a + b, y))["r2"]
        assert np.allclose(r1, r2, atol=1e-10)


class TestPca:
    def test_line_has_one_component(self):
        t = np.linspace(-1, 1, 50)[:, None]
        x = t * np.array([1.0, 2.0, -1.0])
        assert pca_project(x, 2).explained_variance_ratio[1] < 1e-9

    def test_isotropic(self):
        x = np.random.default_rng(8).standard_normal((10_000, 2))
        ratio = pca_project(x, 2).explained_variance_ratio
        assert np.all(np.abs(ratio - 0.5) < 0.05)

    @pytest.mark.parametrize("shape", [(200, 10), (12, 40)])
    def test_pythagorean_and_orthonormal(self, shape):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(shape) * np.linspace(3, 0.5, shape[1])
        res = pca_project(x, 3)
        xc = x - x.mean(axis=0)
        recon = res.scores @ res.components
        err = np.sum((xc - recon) ** 2) / len(x)
        assert err == pytest.approx(np.sum(xc**2) / len(x) - res.explained_variance.sum(), abs=1e-9)
        assert np.allclose(res.components @ res.components.T, np.eye(3), atol=1e-9)
        assert np.allclose(res.scores.mean(axis=0), 0.0, atol=1e-9)
        assert np.all(np.diff(res.explained_variance_ratio) <= 1e-15)

    def test_matches_sklearn(self):
        from sklearn.decomposition import PCA

        x = np.random.default_rng(10).standard_normal((100, 6)) * [5, 4, 3, 2, 1, 0.5]
        ours = pca_project(x, 3)
        ref = PCA(3).fit(x)
        assert np.allclose(ours.explained_variance_ratio, ref.explained_variance_ratio_, atol=1e-12)
        assert np.allclose(np.abs(ours.scores), np.abs(ref.transform(x)), atol=1e-10)

    def test_sign_convention(self):
        res = pca_project(np.random.default_rng(11).standard_normal((50, 5)), 2)
        for c in res.components:
            assert c[np.argmax(np.abs(c))] > 0

    def test_gram_route_agrees_with_covariance(self):
        x = np.random.default_rng(12).standard_normal((8, 8))
        wide = pca_project(x[:, :7], 2)  # M > D: covariance route
        padded = pca_project(np.hstack([x[:, :7], np.zeros((8, 3))]), 2)  # M < D: Gram route
        assert np.allclose(wide.scores, padded.scores, atol=1e-10)


class TestSilhouette:
    def test_separated_clusters(self):
        rng = np.random.default_rng(13)
        x = np.vstack([rng.normal(0, 0.1, (50, 2)), rng.normal(20, 0.1, (50, 2))])
        assert silhouette_coefficient(x, [0] * 50 + [1] * 50) > 0.95

    def test_shuffled_labels(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((1000, 2))
        assert abs(silhouette_coefficient(x, rng.integers(0, 2, 1000))) < 0.05

    def test_overlapping_identical_clusters(self):
        x = np.random.default_rng(15).standard_normal((100, 2))
        assert abs(silhouette_coefficient(np.vstack([x, x]), [0] * 100 + [1] * 100)) < 0.05

    def test_matches_sklearn(self):
        from sklearn.metrics import silhouette_samples as sk_samples

        rng = np.random.default_rng(16)
        x = rng.standard_normal((120, 3))
        labels = rng.integers(0, 4, 120)
        assert np.allclose(silhouette_samples(x, labels), sk_samples(x, labels), atol=1e-12)

    def test_singleton_scores_zero(self):
        x = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
        assert silhouette_samples(x, [0, 0, 1])[2] == 0.0

    def test_single_cluster(self):
        with pytest.raises(SingleCluster):
            silhouette_coefficient(np.zeros((5, 2)), [1] * 5)

    @given(st.integers(0, 2**32 - 1))
    def test_rigid_motion_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((30, 3))
        labels = np.arange(30) % 3
        moved = x @ random_rotation(rng, 3).T + rng.standard_normal(3) * 10
        assert silhouette_coefficient(moved, labels) == pytest.approx(silhouette_coefficient(x, labels), abs=1e-9)


class TestTemporalReport:
    def test_identical_labels(self):
        data = linear_latents(5, 10, 4, 1, seed=0)
        with pytest.raises(SingleCluster):
            temporal_cluster_report(data, [0, 5], labels=[0] * 5)

    def test_ramp_increases(self):
        times = list(range(0, 100, 10))
        for seed in range(20):
            data = cluster_latents([50, 150, 250], 30, 100, 16, seed=seed)
            sc = [r["sc_pca"] for r in temporal_cluster_report(data, times)]
            assert spearmanr(times, sc)[0] > 0.8

    def test_final_separation(self):
        data = cluster_latents([50, 150, 250], 100, 100, 32, seed=0)
        rows = temporal_cluster_report(data, [99])
        assert rows[0]["sc_pca"] > 0.8 and rows[0]["sc_full"] > 0

    def test_constant_latents(self):
        trajs = [LatentTrajectory(np.ones((5, 3)), np.zeros((5, 1)), label=k % 2) for k in range(10)]
        rows = temporal_cluster_report(LatentTrajectorySet(trajs), [0, 4])
        assert all(abs(r["sc_pca"]) < 1e-9 and abs(r["sc_full"]) < 1e-9 for r in rows)


class TestTrajectorySet:
    def test_mismatched_dimensions(self):
        with pytest.raises(ValueError):
            LatentTrajectorySet([LatentTrajectory(np.zeros((3, 2)), np.zeros((3, 1))), LatentTrajectory(np.zeros((3, 4)), np.zeros((3, 1)))])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            LatentTrajectorySet([LatentTrajectory(np.full((3, 2), np.nan), np.zeros((3, 1)))])
