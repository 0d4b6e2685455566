"""Ground-truth generators: spherical-cap layouts, random contacts, calibration datasets.

The reference fixture is a 4 x 6 taxel grid on a 10 mm sphere, sampled on a
latitude/longitude patch around the +z pole. The sensor frame sits at the
sphere center, so inward normals point at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import axis_angle, random_rotations
from .sensor_model import CopContact, TaxelLayout, cop_to_taxels
from .kinematics import equilibrium_torque, forward_kinematics, point_jacobian


@dataclass
class CapLayoutSpec:
    radius: float = 0.010
    rows: int = 4
    cols: int = 6
    row_extent: float = 1.41  # radians spanned by the row angles
    col_extent: float = 2.35
    normal_axis: int = 2
    epsilon: float = 0.05
    sigma: float = 0.003
    lam: float = 1e-3
    normal_only: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if not (0 <= self.row_extent < np.pi and 0 <= self.col_extent < np.pi):
            raise ValueError("angular extents must lie in [0, pi)")


@dataclass
class ContactSpec:
    """Distribution of random contacts on the cap surface.

    ``margin`` shrinks the angular box spanned by the taxels so contacts stay
    inside the instrumented region; ``shear_ratio`` bounds the tangential force
    relative to the inward normal component.
    """

    force_min: float = 0.5
    force_max: float = 5.0
    shear_ratio: float = 1.0
    margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.force_min <= self.force_max):
            raise ValueError("need 0 < force_min <= force_max")
        if self.shear_ratio < 0:
            raise ValueError("shear_ratio must be non-negative")


@dataclass
class CalibDataset:
    """Stacked calibration samples.

    ``forces`` are taxel-frame readings ``(S, N, 3)``, ``q`` joint angles
    ``(S, n_joints)`` and ``tau`` measured torques ``(S, n_joints)``.
    """

    t: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    forces: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = len(self.t)
        self.q = np.asarray(self.q, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.forces = np.asarray(self.forces, dtype=float)
        # explicit trailing sizes keep empty datasets well shaped
        self.q = self.q.reshape(n, self.q.shape[-1] if self.q.ndim == 2 else -1)
        self.tau = self.tau.reshape(n, self.tau.shape[-1] if self.tau.ndim == 2 else -1)
        self.forces = self.forces.reshape(n, self.forces.shape[1] if self.forces.ndim == 3 else -1, 3)

    def __len__(self):
        return len(self.t)


def cap_direction(row_angle, col_angle):
    """Outward unit direction for a (row, col) angle pair; (0, 0) is the +z pole."""
    a = np.asarray(row_angle, dtype=float)
    b = np.asarray(col_angle, dtype=float)
    return np.stack([np.cos(a) * np.sin(b), np.sin(a), np.cos(a) * np.cos(b)], axis=-1)


def _cap_angles(direction):
    d = np.asarray(direction, dtype=float)
    return np.arcsin(np.clip(d[..., 1], -1, 1)), np.arctan2(d[..., 0], d[..., 2])


def surface_frame(inward, normal_axis=2):
    """Rotation whose ``normal_axis`` column is ``inward``.

    The next axis (cyclically) is the sensor x axis projected onto the tangent
    plane, falling back to y when x is nearly normal.
    """
    z = np.asarray(inward, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.95 else np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.empty((3, 3))
    rot[:, normal_axis] = z
    rot[:, (normal_axis + 1) % 3] = x
    rot[:, (normal_axis + 2) % 3] = y
    return rot


def generate_cap_layout(spec):
    """Taxels on a spherical-cap grid with their nominal (ground-truth) frames."""
    rows = np.linspace(-spec.row_extent / 2, spec.row_extent / 2, spec.rows) if spec.rows > 1 else np.zeros(1)
    cols = np.linspace(-spec.col_extent / 2, spec.col_extent / 2, spec.cols) if spec.cols > 1 else np.zeros(1)
    a, b = np.meshgrid(rows, cols, indexing="ij")
    dirs = cap_direction(a.ravel(), b.ravel())
    positions = spec.radius * dirs
    orientations = np.stack([surface_frame(-d, spec.normal_axis) for d in dirs])
    return TaxelLayout(
        positions=positions,
        orientations=orientations,
        normal_axis=spec.normal_axis,
        epsilon=spec.epsilon,
        sigma=spec.sigma,
        lam=spec.lam,
        normal_only=spec.normal_only,
    )


def perturb_orientations(orientations, max_angle, rng):
    """Right-multiply each rotation by a random rotation of angle <= ``max_angle``.

    Angles are uniform in ``[0, max_angle]`` about Haar-random axes.
    """
    n = len(orientations)
    axes = rng.standard_normal((n, 3))
    angles = rng.uniform(0.0, max_angle, n)
    return np.asarray(orientations) @ axis_angle(axes, angles)


def random_rotation_params(n, rng):
    return random_rotations(n, rng)


def sample_contacts(layout, spec, count):
    """Seeded random contacts on the sphere carrying ``layout``.

    The sphere radius is the mean taxel distance from the sensor origin and the
    admissible region is the angular bounding box of the taxels, inset by
    ``spec.margin`` radians on every side.
    """
    if count <= 0:
        return []
    rng = np.random.default_rng(spec.seed)
    radius = float(np.mean(np.linalg.norm(layout.positions, axis=1)))
    a, b = _cap_angles(layout.positions / np.linalg.norm(layout.positions, axis=1, keepdims=True))
    a_lo, a_hi = _inset(a.min(), a.max(), spec.margin)
    b_lo, b_hi = _inset(b.min(), b.max(), spec.margin)

    ra = rng.uniform(a_lo, a_hi, count)
    rb = rng.uniform(b_lo, b_hi, count)
    mag = rng.uniform(spec.force_min, spec.force_max, count)
    shear = rng.uniform(0.0, spec.shear_ratio, count)
    phase = rng.uniform(0.0, 2 * np.pi, count)

    dirs = cap_direction(ra, rb)
    contacts = []
    for k in range(count):
        inward = -dirs[k]
        t1 = np.cross(inward, [0.0, 1.0, 0.0])
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(inward, t1)
        direction = inward + shear[k] * (np.cos(phase[k]) * t1 + np.sin(phase[k]) * t2)
        force = mag[k] * direction / np.linalg.norm(direction)
        contacts.append(CopContact(force, radius * dirs[k]))
    return contacts


def _inset(lo, hi, margin):
    if hi - lo <= 2 * margin:
        mid = 0.5 * (lo + hi)
        return mid, mid
    return lo + margin, hi - margin


@dataclass
class NoiseSpec:
    """Multiplicative force noise ``x U(1 - force_scale, 1 + force_scale)`` per taxel
    and additive Gaussian torque noise."""

    force_scale: float = 0.0
    torque_std: float = 0.0
    q_jitter: float = 0.0
    seed: int = 0


def synthesize_dataset(
    contacts,
    layout,
    true_orientations,
    chain,
    q_nominal,
    noise=None,
    rate=20.0,
    torque_from="estimate",
):
    """Taxel readings and equilibrium torques for a list of contacts.

    Readings come from the stress model with ``true_orientations``. With
    ``torque_from="estimate"`` (default) each torque is the one the calibration
    model predicts from the noiseless reading under the true rotations, so the
    torque-matching loss is exactly zero there. ``"contact"`` uses
    the generating contact instead, which leaves the model's position bias in
    the data.
    """
    if torque_from not in ("estimate", "contact"):
        raise ValueError("torque_from must be 'estimate' or 'contact'")
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(noise.seed)
    true_layout = layout.with_orientations(true_orientations)
    n = len(contacts)
    q_nominal = np.asarray(q_nominal, dtype=float)
    t = np.arange(n) / rate
    q = np.tile(q_nominal, (n, 1))
    if noise.q_jitter > 0:
        q = q + rng.normal(0.0, noise.q_jitter, q.shape)
    forces = np.zeros((n, layout.n_taxels, 3))
    for k, contact in enumerate(contacts):
        forces[k] = cop_to_taxels(contact, true_layout, t[k]).forces
    if torque_from == "estimate" and n:
        from .calibration import predict_torques

        probe = CalibDataset(t, q, np.zeros_like(q), forces)
        tau, src_f, src_p, _ = predict_torques(true_orientations, probe, true_layout, chain)
    else:
        tau = np.zeros((n, len(q_nominal)))
        for k, contact in enumerate(contacts):
            tau[k] = contact_torque(chain, q[k], contact)
        src_f = np.array([c.force for c in contacts]).reshape(n, 3)
        src_p = np.array([c.position for c in contacts]).reshape(n, 3)
    if noise.force_scale > 0:
        scale = rng.uniform(1 - noise.force_scale, 1 + noise.force_scale, forces.shape[:2])
        forces = forces * scale[..., None]
    if noise.torque_std > 0:
        tau = tau + rng.normal(0.0, noise.torque_std, tau.shape)
    meta = {
        "torque_from": torque_from,
        "source_forces": src_f,
        "source_positions": src_p,
    }
    return CalibDataset(t, q, tau, forces, meta)


def contact_torque(chain, q, contact):
    """Joint torques balancing ``contact`` (sensor frame) at configuration ``q``."""
    pose = forward_kinematics(chain, q)
    p_base = pose.apply(contact.position)
    f_base = pose.apply_vector(contact.force)
    return equilibrium_torque(point_jacobian(chain, q, p_base), f_base)
