"""Latent-representation analysis: linear probes, PCA and silhouette tracking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import DegenerateTarget, SingleCluster, SingularDesign


@dataclass
class LatentTrajectory:
    latents: np.ndarray  # (T, D)
    targets: np.ndarray  # (T, K)
    label: object = None
    times: np.ndarray | None = None


class LatentTrajectorySet:
    """Trajectories of recurrent latents with matching probe targets."""

    def __init__(self, trajectories):
        self.trajectories = list(trajectories)
        if not self.trajectories:
            raise ValueError("need at least one trajectory")
        d = {tr.latents.shape[1] for tr in self.trajectories}
        k = {np.atleast_2d(tr.targets).shape[-1] for tr in self.trajectories}
        if len(d) != 1 or len(k) != 1:
            raise ValueError("latent or target dimensions differ across trajectories")
        for tr in self.trajectories:
            if len(tr.latents) != len(tr.targets):
                raise ValueError("latents and targets must have the same length")
            if not (np.all(np.isfinite(tr.latents)) and np.all(np.isfinite(tr.targets))):
                raise ValueError("non-finite latent or target values")

    def __len__(self):
        return len(self.trajectories)

    @property
    def labels(self):
        return [tr.label for tr in self.trajectories]

    def stacked(self):
        x = np.concatenate([tr.latents for tr in self.trajectories])
        y = np.concatenate([np.asarray(tr.targets, dtype=float).reshape(len(tr.targets), -1) for tr in self.trajectories])
        return x, y

    def at_step(self, t):
        """Latents of every trajectory at time index ``t``, shape ``(n_traj, D)``."""
        return np.stack([tr.latents[t] for tr in self.trajectories])


def _design(x):
    return np.hstack([x, np.ones((len(x), 1))])


def linear_probe_fit(train, ridge=1e-6):
    """Ridge regression weights ``(D + 1, K)``; the last row is the (unpenalized) bias."""
    x, y = train.stacked() if isinstance(train, LatentTrajectorySet) else train
    a = _design(np.asarray(x, dtype=float))
    gram = a.T @ a
    if ridge > 0:
        pen = np.full(a.shape[1], ridge)
        pen[-1] = 0.0
        gram = gram + np.diag(pen)
        return cho_solve(cho_factor(gram), a.T @ y)
    if np.linalg.matrix_rank(a) < a.shape[1]:
        raise SingularDesign("design matrix is rank deficient; use ridge > 0")
    # lstsq on the design avoids squaring its condition number
    return np.linalg.lstsq(a, y, rcond=None)[0]


def probe_predict(weights, x):
    return _design(np.asarray(x, dtype=float)) @ weights


def probe_score(weights, test, strict=True):
    """Per-target RMSE and r^2 on ``test`` (a set or an ``(x, y)`` pair).

    A constant target column has no defined r^2: it raises
    :class:`DegenerateTarget`, or yields NaN for that column when
    ``strict=False``.
    """
    x, y = test.stacked() if isinstance(test, LatentTrajectorySet) else test
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    resid = y - probe_predict(weights, x)
    rmse = np.sqrt(np.mean(resid**2, axis=0))
    ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    flat = ss_tot == 0
    if strict and np.any(flat):
        raise DegenerateTarget("constant target column(s) %s" % np.flatnonzero(flat))
    ss_res = np.sum(resid**2, axis=0)
    r2 = np.where(flat, np.nan, 1.0 - ss_res / np.where(flat, 1.0, ss_tot))
    return {"rmse": rmse, "r2": r2}


@dataclass
class PCAResult:
    scores: np.ndarray
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def pca_project(latents, k=2):
    """Project mean-centered rows onto the top-``k`` principal directions.

    Uses the ``D x D`` covariance when there are more samples than dimensions
    and the ``M x M`` Gram matrix otherwise. Each component is signed so that
    its largest-magnitude loading is positive.
    """
    x = np.asarray(latents, dtype=float)
    m, d = x.shape
    if not 1 <= k <= m:
        raise ValueError("need 1 <= k <= number of samples")
    mean = x.mean(axis=0)
    xc = x - mean
    total = np.sum(xc**2) / m
    if m > d:
        evals, evecs = np.linalg.eigh(xc.T @ xc / m)
        order = np.argsort(evals)[::-1][:k]
        evals, comps = evals[order], evecs[:, order].T
    else:
        evals, u = np.linalg.eigh(xc @ xc.T / m)
        order = np.argsort(evals)[::-1][:k]
        evals, u = evals[order], u[:, order]
        comps = (xc.T @ u).T
        norms = np.linalg.norm(comps, axis=1, keepdims=True)
        comps = np.where(norms > 0, comps / np.where(norms > 0, norms, 1.0), 0.0)
    evals = np.maximum(evals, 0.0)
    if k > min(m, d):
        pad = k - comps.shape[0]
        comps = np.vstack([comps, np.zeros((pad, d))]) if pad > 0 else comps
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(len(comps)), idx])
    comps = comps * np.where(signs == 0, 1.0, signs)[:, None]
    ratio = evals / total if total > 0 else np.zeros_like(evals)
    return PCAResult(xc @ comps.T, comps, evals, ratio, mean)


def silhouette_samples(points, labels):
    """Per-point silhouette values (Euclidean); singleton clusters score 0."""
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    dist = cdist(x, x)
    onehot = np.eye(len(uniq))[inv]
    sums = dist @ onehot  # (M, C) total distance to each cluster
    counts = onehot.sum(axis=0)
    own = counts[inv]
    a = sums[np.arange(len(x)), inv] / np.maximum(own - 1, 1)
    other = sums / counts
    other[np.arange(len(x)), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.where(own > 1, s, 0.0)


def silhouette_coefficient(points, labels):
    return float(np.mean(silhouette_samples(points, labels)))


def temporal_cluster_report(data, times, k=2, labels=None):
    """Silhouette coefficient of trajectory labels at each requested time index.

    Returns rows with ``sc_pca`` (on the ``k``-dim PCA scores of that step) and
    ``sc_full`` (on the full latents).
    """
    labels = data.labels if labels is None else labels
    rows = []
    for t in times:
        z = data.at_step(t)
        scores = pca_project(z, k).scores
        rows.append(
            {"time": t, "sc_pca": silhouette_coefficient(scores, labels), "sc_full": silhouette_coefficient(z, labels)}
        )
    return rows


def linear_latents(n_traj, steps, dim, n_targets, seed=0, noise=0.0):
    """Trajectories whose targets are an exact affine map of the latents (plus optional noise)."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((dim, n_targets))
    bias = rng.standard_normal(n_targets)
    out = []
    for k in range(n_traj):
        z = rng.standard_normal((steps, dim))
        y = z @ w + bias + noise * rng.standard_normal((steps, n_targets))
        out.append(LatentTrajectory(z, y, label=k))
    return LatentTrajectorySet(out)


def cluster_latents(labels, per_label, steps, dim, seed=0, separation=12.0, noise=1.0):
    """Latents whose class offset grows linearly from zero at t=0 to ``separation`` at the end.

    Mimics trajectories that drift apart as a hidden property (e.g. mass)
    reveals itself over time.
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((len(labels), dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    ramp = np.linspace(0.0, 1.0, steps)[:, None]
    out = []
    for c, label in enumerate(labels):
        for _ in range(per_label):
            z = noise * rng.standard_normal((steps, dim)) + ramp * centers[c]
            out.append(LatentTrajectory(z, np.zeros((steps, 1)), label=label))
    return LatentTrajectorySet(out)
