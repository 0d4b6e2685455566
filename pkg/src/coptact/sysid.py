"""Actuator system identification by Bayesian optimization over trajectory MSE.

The plant is a single PD-driven joint,

    I qdd = Kp (q* - q) - Kd qd - b qd - c tanh(qd / 1e-3),

integrated with semi-implicit Euler. The Gaussian-process surrogate uses an
ARD Matern-5/2 kernel on the unit box, hyperparameters by maximum marginal
likelihood, and expected improvement maximized by seeded random multi-start
search followed by L-BFGS-B polishing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import GridMismatch, Unstable

PARAM_NAMES = ("stiffness", "damping", "coulomb_friction", "viscous_friction", "inertia")
UNSTABLE_PENALTY = 1e6
COULOMB_SMOOTHING = 1e-3


@dataclass
class ActuatorParams:
    stiffness: float = 2.0
    damping: float = 0.05
    coulomb_friction: float = 0.01
    viscous_friction: float = 0.01
    inertia: float = 0.005

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("actuator parameters must be finite and non-negative")
        if self.inertia <= 0:
            raise ValueError("inertia must be positive")

    def as_array(self):
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*[float(v) for v in values])

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}


@dataclass
class ProbeSequence:
    kind: str = "step"  # step | ramp | chirp
    duration: float = 2.0
    amplitude: float = 0.5
    f_start: float = 0.2
    f_end: float = 3.0
    sample_rate: float = 100.0

    def __post_init__(self):
        if self.kind not in ("step", "ramp", "chirp"):
            raise ValueError("probe kind must be step, ramp or chirp")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")

    def times(self):
        n = int(round(self.duration * self.sample_rate)) + 1
        return np.arange(n) / self.sample_rate

    def target(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "step":
            return np.where(t > 0, self.amplitude, 0.0)
        if self.kind == "ramp":
            return self.amplitude * np.clip(t / self.duration, 0.0, 1.0)
        # linear chirp, instantaneous frequency sweeps f_start -> f_end
        k = (self.f_end - self.f_start) / self.duration
        return self.amplitude * np.sin(2 * np.pi * (self.f_start * t + 0.5 * k * t * t))


def default_probes():
    return [ProbeSequence("step"), ProbeSequence("ramp"), ProbeSequence("chirp")]


@dataclass
class Trajectory:
    times: np.ndarray
    target: np.ndarray
    measured: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        self.measured = np.asarray(self.measured, dtype=float)
        if not (len(self.times) == len(self.target) == len(self.measured)):
            raise ValueError("trajectory arrays must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def simulate_actuator(params, probe, dt=1e-3, q0=0.0):
    """Integrate the PD joint along ``probe`` and sample at the probe rate."""
    if dt > 1.0 / (2.0 * probe.sample_rate):
        raise ValueError("dt must be <= 1 / (2 * sample_rate)")
    times = probe.times()
    substeps = max(1, int(np.ceil((1.0 / probe.sample_rate) / dt)))
    h = 1.0 / probe.sample_rate / substeps
    kp, kd, coulomb, viscous, inertia = params.as_array()
    limit = 10.0 * max(abs(probe.amplitude), 1e-12)

    # fine-grid targets evaluated once; the loop below stays scalar
    fine_t = np.arange((len(times) - 1) * substeps) * h + h
    fine_target = probe.target(fine_t)
    q, qd = float(q0), 0.0
    out = np.empty(len(times))
    out[0] = q
    k = 0
    for i in range(1, len(times)):
        for _ in range(substeps):
            acc = (kp * (fine_target[k] - q) - (kd + viscous) * qd - coulomb * math.tanh(qd / COULOMB_SMOOTHING)) / inertia
            qd += h * acc
            q += h * qd
            k += 1
        if not abs(q) <= limit:
            raise Unstable("joint angle %.3g exceeded 10x amplitude" % q)
        out[i] = q
    return Trajectory(times, probe.target(times), out)


def trajectory_mse(a, b):
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise GridMismatch("trajectories are sampled on different time grids")
    return float(np.mean((a.measured - b.measured) ** 2))


def probe_loss(params, reference, probes, weights=None, dt=1e-3):
    """Weighted mean of per-probe trajectory MSEs (equal weights by default)."""
    weights = np.ones(len(probes)) if weights is None else np.asarray(weights, dtype=float)
    losses = [trajectory_mse(simulate_actuator(params, p, dt), r) for p, r in zip(probes, reference)]
    return float(np.dot(weights, losses) / weights.sum())


@dataclass
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (len(PARAM_NAMES),) or self.upper.shape != self.lower.shape:
            raise ValueError("bounds need one entry per actuator parameter")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.lower < 0) or self.lower[-1] <= 0:
            raise ValueError("bounds must be non-negative with positive inertia")

    @classmethod
    def default(cls):
        return cls([0.5, 0.0, 0.0, 0.0, 0.002], [5.0, 0.2, 0.05, 0.05, 0.02])

    def to_unit(self, x):
        span = np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return (np.asarray(x) - self.lower) / span

    def from_unit(self, u):
        return self.lower + np.asarray(u) * (self.upper - self.lower)

    def to_dict(self):
        return {n: [float(lo), float(hi)] for n, lo, hi in zip(PARAM_NAMES, self.lower, self.upper)}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(PARAM_NAMES)
        if unknown:
            raise ValueError("unknown bound names: %s" % sorted(unknown))
        return cls([d[n][0] for n in PARAM_NAMES], [d[n][1] for n in PARAM_NAMES])


def matern52(a, b, lengthscales):
    d = np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) / lengthscales) ** 2, 0).sum(-1))
    s5 = np.sqrt(5.0) * d
    return (1.0 + s5 + 5.0 / 3.0 * d * d) * np.exp(-s5)


class GaussianProcess:
    """Zero-mean GP on standardized targets with an ARD Matern-5/2 kernel.

    ``noise`` is the observation variance in standardized units. With
    ``fit_hyper=False`` the given length scales are kept.
    """

    def __init__(self, lengthscales=None, noise=1e-6, fit_hyper=True):
        self.lengthscales = None if lengthscales is None else np.asarray(lengthscales, dtype=float)
        self.noise = noise
        self.fit_hyper = fit_hyper

    def _nll(self, log_ls, x, y):
        k = matern52(x, x, np.exp(log_ls)) + self.noise * np.eye(len(x))
        try:
            c, low = cho_factor(k, lower=True)
        except np.linalg.LinAlgError:
            return 1e25
        alpha = cho_solve((c, low), y)
        return 0.5 * y @ alpha + np.log(np.diag(c)).sum()

    def fit(self, x, y):
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = y.mean()
        self.y_std = y.std() if y.std() > 0 else 1.0
        ys = (y - self.y_mean) / self.y_std
        dim = self.x.shape[1]
        if self.lengthscales is None:
            self.lengthscales = np.full(dim, 0.3)
        if self.fit_hyper and len(self.x) > 2:
            bounds = [(np.log(0.01), np.log(10.0))] * dim
            best = None
            for start in (np.log(self.lengthscales), np.full(dim, np.log(0.3))):
                res = minimize(self._nll, start, args=(self.x, ys), method="L-BFGS-B", bounds=bounds)
                if best is None or res.fun < best.fun:
                    best = res
            self.lengthscales = np.exp(best.x)
        k = matern52(self.x, self.x, self.lengthscales) + self.noise * np.eye(len(self.x))
        self._chol = cho_factor(k, lower=True)
        self._alpha = cho_solve(self._chol, ys)
        return self

    def predict(self, xq):
        xq = np.atleast_2d(xq)
        ks = matern52(xq, self.x, self.lengthscales)
        mean = ks @ self._alpha
        v = solve_triangular(self._chol[0], ks.T, lower=True)
        var = np.maximum(1.0 - (v * v).sum(0), 1e-18)
        return mean * self.y_std + self.y_mean, np.sqrt(var) * self.y_std


def expected_improvement(mean, std, best, xi=0.0):
    imp = best - mean - xi
    z = imp / std
    return imp * norm.cdf(z) + std * norm.pdf(z)


@dataclass
class BOConfig:
    budget: int = 100
    n_init: int | None = None  # defaults to 2 * dim
    n_candidates: int = 2000
    n_polish: int = 3
    trust_region: bool = True  # search candidates in an adaptive box around the incumbent
    tr_length: float = 0.8  # initial box side, unit-cube units
    tr_min: float = 0.5**7
    tr_max: float = 1.6
    tr_success: int = 3  # consecutive improvements that double the box
    tr_failure: int = 5  # consecutive misses that halve it
    log_objective: bool = True
    seed: int = 0
    random_search: bool = False


@dataclass
class BOResult:
    best_params: ActuatorParams
    best_loss: float
    history: list = field(default_factory=list)  # dicts: params, loss, unstable, best


def _evaluate(x, reference, probes, weights):
    try:
        return probe_loss(ActuatorParams.from_array(x), reference, probes, weights), False
    except Unstable:
        return UNSTABLE_PENALTY, True


class _TrustRegion:
    """Box around the incumbent whose side adapts to the success of recent proposals.

    Side lengths per dimension are scaled by the GP length scales (normalized
    to unit geometric mean), so the box stretches along flat directions.
    """

    def __init__(self, config):
        self.config = config
        self.length = config.tr_length
        self.successes = 0
        self.failures = 0

    def box(self, center, lengthscales):
        w = lengthscales / np.exp(np.mean(np.log(lengthscales)))
        half = 0.5 * self.length * w
        return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)

    def update(self, improved):
        c = self.config
        if improved:
            self.successes, self.failures = self.successes + 1, 0
        else:
            self.successes, self.failures = 0, self.failures + 1
        if self.successes >= c.tr_success:
            self.length, self.successes = min(2.0 * self.length, c.tr_max), 0
        elif self.failures >= c.tr_failure:
            self.length, self.failures = 0.5 * self.length, 0
        if self.length < c.tr_min:
            self.length = c.tr_length


def bayes_opt_identify(reference, probes, bounds=None, config=None, weights=None):
    """Minimize trajectory MSE against ``reference`` over box-bounded parameters.

    Returns a :class:`BOResult` holding the best-seen parameters and one
    history entry per evaluation. Unstable simulations are scored 1e6.
    """
    bounds = bounds or Bounds.default()
    config = config or BOConfig()
    dim = len(PARAM_NAMES)
    n_init = 2 * dim if config.n_init is None else config.n_init
    if config.budget < n_init and not config.random_search:
        raise ValueError("budget must cover the %d initial points" % n_init)
    rng = np.random.default_rng(config.seed)
    free = bounds.upper > bounds.lower

    xs, losses, history = [], [], []

    def record(u):
        x = bounds.from_unit(u)
        loss, unstable = _evaluate(x, reference, probes, weights)
        xs.append(u)
        losses.append(loss)
        best = min(losses)
        history.append({"params": ActuatorParams.from_array(x).to_dict(), "loss": loss, "unstable": unstable, "best": best})

    if not free.any():
        # collapsed box: one point, re-recorded so the history still spans the budget
        u = np.zeros(dim)
        record(u)
        while len(xs) < config.budget:
            xs.append(u)
            losses.append(losses[0])
            history.append(dict(history[0]))
        return BOResult(ActuatorParams.from_array(bounds.lower), float(losses[0]), history)

    n_first = config.budget if config.random_search else n_init
    for u in rng.uniform(size=(n_first, dim)):
        record(np.where(free, u, 0.0))

    region = _TrustRegion(config) if config.trust_region else None
    while len(xs) < config.budget:
        x_arr = np.array(xs)[:, free]
        y = np.array(losses)
        y_fit = np.log(np.maximum(y, 1e-300)) if config.log_objective else y
        gp = GaussianProcess().fit(x_arr, y_fit)
        best = y_fit.min()

        def neg_ei(z):
            m, s = gp.predict(z)
            return -expected_improvement(m, s, best)

        if region is None:
            lo, hi = np.zeros(x_arr.shape[1]), np.ones(x_arr.shape[1])
        else:
            lo, hi = region.box(x_arr[np.argmin(y_fit)], gp.lengthscales)
        cand = lo + (hi - lo) * rng.uniform(size=(config.n_candidates, x_arr.shape[1]))
        scores = neg_ei(cand)
        order = np.argsort(scores)[: config.n_polish]
        best_u, best_score = cand[order[0]], scores[order[0]]
        for start in cand[order]:
            res = minimize(lambda z: neg_ei(z[None])[0], start, method="L-BFGS-B", bounds=list(zip(lo, hi)))
            if res.fun < best_score:
                best_u, best_score = res.x, res.fun
        u = np.zeros(dim)
        u[free] = best_u
        record(u)
        if region is not None:
            new = np.log(max(losses[-1], 1e-300)) if config.log_objective else losses[-1]
            region.update(new < best - 1e-3 * abs(best))

    k = int(np.argmin(losses))
    return BOResult(ActuatorParams.from_array(bounds.from_unit(xs[k])), float(losses[k]), history)


def random_search_baseline(reference, probes, bounds=None, n=100, seed=0, weights=None):
    """Losses of ``n`` uniform random parameter draws (the comparison baseline)."""
    bounds = bounds or Bounds.default()
    rng = np.random.default_rng(seed)
    return np.array([_evaluate(bounds.from_unit(u), reference, probes, weights)[0] for u in rng.uniform(size=(n, len(PARAM_NAMES)))])
