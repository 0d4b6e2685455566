"""Taxel orientation calibration by static-equilibrium torque matching.

Each taxel orientation is parameterized by an unconstrained 3x3 matrix that
is projected onto SO(3). For every sample the rotated taxel forces go through
the taxel -> CoP mapping, the CoP is moved into the base frame with forward
kinematics, and the predicted torques ``-J^T f`` are compared with the
measured ones. Full-batch Adam minimizes the mean squared torque error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from . import diffmodel
from .errors import AllSamplesSkipped, EmptyDataset, NoContact
from .geometry import geodesic_angle, random_rotations, svd_project
from .kinematics import equilibrium_torque, forward_kinematics, joint_axes, point_jacobian
from .sensor_model import TaxelReading, active_set, taxels_to_cop

log = logging.getLogger(__name__)


@dataclass
class CalibConfig:
    learning_rate: float = 0.1
    steps: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init: str = "nominal"  # nominal | identity | random

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.init not in ("nominal", "identity", "random"):
            raise ValueError("init must be nominal, identity or random")


@dataclass
class CalibSample:
    reading: TaxelReading
    q: np.ndarray
    tau: np.ndarray


@dataclass
class CalibReport:
    loss_history: list
    final_loss: float
    final_rotations: np.ndarray
    skipped_count: int
    geodesic_errors: np.ndarray | None = None
    initial_geodesic_errors: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "loss_history": [float(x) for x in self.loss_history],
            "final_loss": float(self.final_loss),
            "rotations": [[float(x) for x in r.reshape(9)] for r in self.final_rotations],
            "skipped_count": int(self.skipped_count),
        }
        if self.geodesic_errors is not None:
            out["geodesic_errors"] = [float(x) for x in self.geodesic_errors]
            out["initial_geodesic_errors"] = [float(x) for x in self.initial_geodesic_errors]
        return out


def samples(dataset):
    """Iterate a :class:`~coptact.synthetic.CalibDataset` as :class:`CalibSample` objects."""
    for k in range(len(dataset)):
        yield CalibSample(TaxelReading(dataset.forces[k], dataset.t[k]), dataset.q[k], dataset.tau[k])


def calib_loss(params, sample, layout, chain):
    """Mean squared torque error of one sample (0.0 when it has no active taxel).

    Evaluated step by step with the numpy reference model.
    """
    rotations = svd_project(np.asarray(params, dtype=float))
    current = layout.with_orientations(rotations)
    try:
        contact = taxels_to_cop(sample.reading, current)
    except NoContact:
        return 0.0
    pose = forward_kinematics(chain, sample.q)
    p_base = pose.apply(contact.position)
    f_base = pose.apply_vector(contact.force)
    tau_hat = equilibrium_torque(point_jacobian(chain, sample.q, p_base), f_base)
    return float(np.mean((tau_hat - np.asarray(sample.tau)) ** 2))


class _Batch:
    """Dataset tensors reused by every loss evaluation."""

    def __init__(self, dataset, layout, chain):
        if len(dataset) == 0:
            raise EmptyDataset("calibration dataset is empty")
        self.layout = layout
        forces = np.asarray(dataset.forces, dtype=float)
        active = np.linalg.norm(forces, axis=2) > layout.epsilon
        self.active = active
        self.valid = active.any(axis=1)
        self.n_valid = int(self.valid.sum())
        self.skipped = len(dataset) - self.n_valid

        rot, trans, axes, origins = [], [], [], []
        for q in dataset.q:
            pose = forward_kinematics(chain, q)
            o, a = joint_axes(chain, q)
            rot.append(pose.rotation)
            trans.append(pose.translation)
            axes.append(a)
            origins.append(o)
        t = diffmodel.DTYPE
        self.forces = torch.as_tensor(forces, dtype=t)
        self.tau = torch.as_tensor(np.asarray(dataset.tau, dtype=float), dtype=t)
        self.rot = torch.as_tensor(np.array(rot), dtype=t)
        self.trans = torch.as_tensor(np.array(trans), dtype=t)
        self.axes = torch.as_tensor(np.array(axes), dtype=t)
        self.origins = torch.as_tensor(np.array(origins), dtype=t)
        self.positions = torch.as_tensor(layout.positions, dtype=t)
        self.valid_t = torch.as_tensor(self.valid, dtype=t)

    def predict(self, params):
        """Predicted torques ``(S, dof)`` and the sensor-frame CoP force and position."""
        lay = self.layout
        rotations = diffmodel.svd_project(params)
        normals = rotations[:, :, lay.normal_axis]
        f_sensor = torch.einsum("nij,snj->sni", rotations, self.forces)
        f_cop, p_cop, _, _ = diffmodel.batched_taxels_to_cop(
            f_sensor, self.active, self.positions, normals, lay.sigma, lay.lam,
            lay.normal_only, lay.solve_over_all_taxels,
        )
        f_base = torch.einsum("sij,sj->si", self.rot, f_cop)
        p_base = torch.einsum("sij,sj->si", self.rot, p_cop) + self.trans
        # columns of the point Jacobian: axis_j x (p - origin_j)
        cols = torch.cross(self.axes, p_base[:, None, :] - self.origins, dim=-1)
        tau_hat = -torch.einsum("sjk,sk->sj", cols, f_base)
        return tau_hat, f_cop, p_cop

    def residuals(self, params):
        """Per-sample torque residuals ``(S, dof)``, zeroed on skipped samples."""
        tau_hat, _, _ = self.predict(params)
        return (tau_hat - self.tau) * self.valid_t[:, None]

    def loss(self, params):
        res = self.residuals(params)
        return (res**2).sum() / (self.n_valid * res.shape[1])


def predict_torques(params, dataset, layout, chain):
    """Torques the calibration model predicts for every sample of ``dataset``.

    Returns ``(tau, f_cop, p_cop, valid)`` as arrays; samples without an
    active taxel get zero torque and ``valid = False``. This is the exact
    computation inside the loss, so torques generated with it give a loss of
    exactly zero at the generating parameters.
    """
    batch = _Batch(dataset, layout, chain)
    with torch.no_grad():
        tau, f, p = batch.predict(_as_param_tensor(params).detach())
    keep = batch.valid_t[:, None]
    return (tau * keep).numpy(), (f * keep).numpy(), (p * keep).numpy(), batch.valid.copy()


def _as_param_tensor(params):
    return torch.as_tensor(np.asarray(params, dtype=float), dtype=diffmodel.DTYPE).clone().requires_grad_(True)


def dataset_loss(params, dataset, layout, chain):
    """Mean torque MSE over non-skipped samples (batched torch path)."""
    batch = _Batch(dataset, layout, chain)
    if batch.n_valid == 0:
        raise AllSamplesSkipped("no calibration sample has an active taxel")
    with torch.no_grad():
        return float(batch.loss(_as_param_tensor(params).detach()))


def calib_loss_gradient(params, dataset, layout, chain):
    """Gradient ``(N, 3, 3)`` of :func:`dataset_loss` with respect to every parameter matrix."""
    batch = _Batch(dataset, layout, chain)
    if batch.n_valid == 0:
        raise AllSamplesSkipped("no calibration sample has an active taxel")
    p = _as_param_tensor(params)
    batch.loss(p).backward()
    return p.grad.numpy().copy()


def initial_params(layout, config):
    if config.init == "nominal":
        return layout.orientations.copy()
    if config.init == "identity":
        return np.tile(np.eye(3), (layout.n_taxels, 1, 1))
    return random_rotations(layout.n_taxels, np.random.default_rng(config.seed))


def calibrate(dataset, layout, chain, config=None, true_orientations=None, params0=None):
    """Fit taxel orientations with full-batch Adam.

    ``layout`` supplies positions, hyperparameters and the nominal
    orientations used for initialization. When ``true_orientations`` is given
    the report carries per-taxel geodesic errors before and after.
    """
    config = config or CalibConfig()
    batch = _Batch(dataset, layout, chain)
    if batch.n_valid == 0:
        raise AllSamplesSkipped("no calibration sample has an active taxel")
    if batch.skipped:
        log.info("skipping %d samples with empty active set", batch.skipped)

    start = initial_params(layout, config) if params0 is None else np.asarray(params0, dtype=float)
    p = _as_param_tensor(start)
    opt = torch.optim.Adam(
        [p], lr=config.learning_rate, betas=(config.adam_beta1, config.adam_beta2), eps=config.adam_eps
    )
    history = []
    for step in range(config.steps):
        opt.zero_grad()
        loss = batch.loss(p)
        loss.backward()
        history.append(float(loss.detach()))
        opt.step()
        log.debug("step %d loss %.6e", step, history[-1])
    with torch.no_grad():
        final_loss = float(batch.loss(p))

    final_params = p.detach().numpy().copy()
    rotations = svd_project(final_params)
    report = CalibReport(history, final_loss, rotations, batch.skipped, extra={"final_params": final_params})
    if true_orientations is not None:
        report.geodesic_errors = geodesic_angle(rotations, true_orientations)
        report.initial_geodesic_errors = geodesic_angle(svd_project(start), true_orientations)
    return report
