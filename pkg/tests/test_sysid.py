import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from coptact.errors import GridMismatch, Unstable
from coptact.sysid import (
    PARAM_NAMES,
    ActuatorParams,
    BOConfig,
    Bounds,
    GaussianProcess,
    ProbeSequence,
    Trajectory,
    bayes_opt_identify,
    default_probes,
    expected_improvement,
    matern52,
    probe_loss,
    random_search_baseline,
    simulate_actuator,
    trajectory_mse,
)
from coptact.sysid import _TrustRegion

HIDDEN = ActuatorParams(stiffness=3.0, damping=0.08, coulomb_friction=0.01, viscous_friction=0.02, inertia=0.006)
FAST = dict(n_candidates=200, n_polish=1)


def crossing_times(t, x):
    idx = np.flatnonzero(np.sign(x[:-1]) * np.sign(x[1:]) < 0)
    return t[idx] - x[idx] * (t[idx + 1] - t[idx]) / (x[idx + 1] - x[idx])


@pytest.fixture(scope="module")
def reference():
    probes = default_probes()
    return probes, [simulate_actuator(HIDDEN, p) for p in probes]


class TestSimulation:
    def test_equilibrium_is_constant(self):
        probe = ProbeSequence("step", amplitude=0.3)
        traj = simulate_actuator(HIDDEN, probe, q0=0.3)
        assert np.all(traj.measured == 0.3)

    def test_undamped_oscillation_frequency(self):
        params = ActuatorParams(stiffness=2.0, damping=0.0, coulomb_friction=0.0, viscous_friction=0.0, inertia=0.005)
        probe = ProbeSequence("step", duration=4.0, amplitude=0.5, sample_rate=1000.0)
        traj = simulate_actuator(params, probe, dt=1e-4)
        zc = crossing_times(traj.times, traj.measured - 0.5)
        freq = 1.0 / (2.0 * np.mean(np.diff(zc)))
        assert freq == pytest.approx(np.sqrt(2.0 / 0.005) / (2 * np.pi), rel=0.02)

    def test_overdamped_monotone(self):
        params = ActuatorParams(stiffness=1.0, damping=2.0, coulomb_friction=0.0, viscous_friction=0.0, inertia=0.005)
        traj = simulate_actuator(params, ProbeSequence("step", amplitude=0.5))
        assert np.all(np.diff(traj.measured) >= 0)
        assert np.all(traj.measured <= 0.5)

    def test_deterministic(self):
        a = simulate_actuator(HIDDEN, ProbeSequence("chirp"))
        b = simulate_actuator(HIDDEN, ProbeSequence("chirp"))
        assert np.array_equal(a.measured, b.measured)

    def test_unstable(self):
        params = ActuatorParams(stiffness=5e4, damping=0.0, coulomb_friction=0.0, viscous_friction=0.0, inertia=1e-6)
        with pytest.raises(Unstable):
            simulate_actuator(params, ProbeSequence("step"), dt=5e-3)

    def test_dt_precondition(self):
        with pytest.raises(ValueError):
            simulate_actuator(HIDDEN, ProbeSequence("step", sample_rate=100.0), dt=0.01)

    def test_probe_targets(self):
        t = np.array([0.0, 0.5, 1.0, 2.0])
        assert np.array_equal(ProbeSequence("step").target(t), [0.0, 0.5, 0.5, 0.5])
        assert np.allclose(ProbeSequence("ramp").target(t), [0.0, 0.125, 0.25, 0.5])
        chirp = ProbeSequence("chirp", f_start=1.0, f_end=1.0)
        assert np.allclose(chirp.target(t), 0.5 * np.sin(2 * np.pi * t), atol=1e-15)

    @pytest.mark.parametrize("kw", [{"kind": "sine"}, {"duration": 0.0}, {"sample_rate": -1.0}])
    def test_probe_validation(self, kw):
        with pytest.raises(ValueError):
            ProbeSequence(**kw)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ActuatorParams(stiffness=-1.0)
        with pytest.raises(ValueError):
            ActuatorParams(inertia=0.0)


class TestMse:
    def test_identical(self):
        t = simulate_actuator(HIDDEN, ProbeSequence("ramp"))
        assert trajectory_mse(t, t) == 0.0

    @given(st.floats(-1, 1).filter(lambda d: d == 0 or abs(d) > 1e-3))
    def test_constant_offset(self, delta):
        t = simulate_actuator(HIDDEN, ProbeSequence("ramp"))
        shifted = Trajectory(t.times, t.target, t.measured + delta)
        assert trajectory_mse(t, shifted) == pytest.approx(delta**2, rel=1e-9)

    def test_arithmetic(self):
        rng = np.random.default_rng(0)
        t = np.arange(50) / 10.0
        a, b = rng.standard_normal(50), rng.standard_normal(50)
        expected = sum((x - y) ** 2 for x, y in zip(a, b)) / 50
        assert trajectory_mse(Trajectory(t, t, a), Trajectory(t, t, b)) == pytest.approx(expected, rel=1e-12)

    def test_grid_mismatch(self):
        a = Trajectory([0.0, 1.0], [0, 0], [0, 0])
        b = Trajectory([0.0, 2.0], [0, 0], [0, 0])
        with pytest.raises(GridMismatch):
            trajectory_mse(a, b)


class TestGaussianProcess:
    def test_interpolates(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(15, 3))
        y = np.sin(3 * x).sum(axis=1)
        gp = GaussianProcess(noise=1e-8).fit(x, y)
        assert np.allclose(gp.predict(x)[0], y, atol=1e-6)

    def test_matches_sklearn(self):
        from sklearn.gaussian_process import GaussianProcessRegressor
        from sklearn.gaussian_process.kernels import Matern

        rng = np.random.default_rng(2)
        x, xq = rng.uniform(size=(20, 2)), rng.uniform(size=(30, 2))
        y = np.cos(4 * x[:, 0]) + x[:, 1] ** 2
        ls = np.array([0.3, 0.5])
        ours = GaussianProcess(lengthscales=ls, noise=1e-6, fit_hyper=False).fit(x, y)
        ref = GaussianProcessRegressor(Matern(length_scale=ls, nu=2.5), alpha=1e-6, optimizer=None, normalize_y=True).fit(x, y)
        m_ref, s_ref = ref.predict(xq, return_std=True)
        m, s = ours.predict(xq)
        assert np.allclose(m, m_ref, atol=1e-8)
        assert np.allclose(s, s_ref, atol=1e-6)

    def test_matern_kernel_value(self):
        # k(r) = (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r) at r = 1
        k = matern52(np.zeros((1, 2)), np.array([[0.3, 0.4]]), np.array([0.5, 0.5]))
        r = 1.0
        assert k[0, 0] == pytest.approx((1 + np.sqrt(5) * r + 5 * r * r / 3) * np.exp(-np.sqrt(5) * r))

    def test_expected_improvement(self):
        mean, std, best = np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 1e-9]), 1.0
        z = (best - mean) / std
        expected = (best - mean) * norm.cdf(z) + std * norm.pdf(z)
        assert np.allclose(expected_improvement(mean, std, best), expected)
        assert np.all(expected_improvement(mean, std, best) >= 0)


class TestBayesOpt:
    def test_history_invariants(self, reference):
        probes, ref = reference
        bounds = Bounds.default()
        res = bayes_opt_identify(ref, probes, bounds, BOConfig(budget=14, seed=0, **FAST))
        assert len(res.history) == 14
        best = [h["best"] for h in res.history]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert res.best_loss == best[-1] == min(h["loss"] for h in res.history)
        for h in res.history:
            x = np.array([h["params"][n] for n in PARAM_NAMES])
            assert np.all(x >= bounds.lower) and np.all(x <= bounds.upper)

    def test_deterministic(self, reference):
        probes, ref = reference
        a = bayes_opt_identify(ref, probes, None, BOConfig(budget=12, seed=3, **FAST))
        b = bayes_opt_identify(ref, probes, None, BOConfig(budget=12, seed=3, **FAST))
        assert a.history == b.history

    def test_initial_points_only(self, reference):
        probes, ref = reference
        res = bayes_opt_identify(ref, probes, None, BOConfig(budget=10, seed=1))
        assert len(res.history) == 10
        assert res.best_loss == min(h["loss"] for h in res.history)

    def test_budget_below_initial_design(self, reference):
        probes, ref = reference
        with pytest.raises(ValueError):
            bayes_opt_identify(ref, probes, None, BOConfig(budget=5))

    def test_collapsed_bounds(self, reference):
        probes, ref = reference
        point = HIDDEN.as_array() * 1.1
        res = bayes_opt_identify(ref, probes, Bounds(point, point), BOConfig(budget=10))
        assert np.allclose(res.best_params.as_array(), point)
        assert res.best_loss == pytest.approx(probe_loss(ActuatorParams.from_array(point), ref, probes))
        assert len(res.history) == 10

    def test_unstable_scored_as_penalty(self, reference):
        probes, ref = reference
        bounds = Bounds([1e4, 0, 0, 0, 1e-7], [1e4, 0, 0, 0, 1e-7])
        res = bayes_opt_identify(ref, probes, bounds, BOConfig(budget=10))
        assert all(h["unstable"] and h["loss"] == 1e6 for h in res.history)

    def test_beats_random_search(self, reference):
        probes, ref = reference
        res = bayes_opt_identify(ref, probes, None, BOConfig(budget=30, seed=0, **FAST))
        baseline = random_search_baseline(ref, probes, None, n=30, seed=1)
        assert res.best_loss < np.median(baseline)

    def test_random_search_mode(self, reference):
        probes, ref = reference
        res = bayes_opt_identify(ref, probes, None, BOConfig(budget=8, random_search=True))
        assert len(res.history) == 8

    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            Bounds([-1, 0, 0, 0, 0.001], [1, 1, 1, 1, 1])
        with pytest.raises(ValueError):
            Bounds([1, 0, 0, 0, 0.001], [0.5, 1, 1, 1, 1])
        assert Bounds.from_dict(Bounds.default().to_dict()).to_dict() == Bounds.default().to_dict()


class TestTrustRegion:
    def test_expand_shrink_and_reset(self):
        cfg = BOConfig()
        tr = _TrustRegion(cfg)
        for _ in range(cfg.tr_success):
            tr.update(True)
        assert tr.length == pytest.approx(min(2 * cfg.tr_length, cfg.tr_max))
        tr.update(True)
        tr.update(False)  # a miss resets the success streak
        assert tr.successes == 0
        length = tr.length
        for _ in range(cfg.tr_failure):
            tr.update(False)
        assert tr.length == pytest.approx(0.5 * length)
        while tr.length >= 2 * cfg.tr_min:
            for _ in range(cfg.tr_failure):
                tr.update(False)
        for _ in range(cfg.tr_failure):
            tr.update(False)
        assert tr.length == cfg.tr_length  # collapsed box restarts at the initial size

    def test_box_stretches_along_long_lengthscales(self):
        tr = _TrustRegion(BOConfig(tr_length=0.4))
        lo, hi = tr.box(np.full(2, 0.5), np.array([0.1, 0.4]))
        side = hi - lo
        assert side[1] / side[0] == pytest.approx(4.0)
        assert np.sqrt(side.prod()) == pytest.approx(0.4)  # unit geometric-mean scaling
        lo, hi = tr.box(np.zeros(2), np.array([1.0, 1.0]))
        assert np.all(lo == 0.0) and np.allclose(hi, 0.2)

    def test_global_search_still_available(self, reference):
        probes, ref = reference
        res = bayes_opt_identify(ref, probes, None, BOConfig(budget=14, trust_region=False, **FAST))
        assert len(res.history) == 14
