"""Taxel <-> center-of-pressure mapping under the Gaussian stress-spreading model.

All vectors are in the sensor frame unless a name says otherwise. Taxel
readings arrive in each taxel's local frame and are rotated into the sensor
frame with the layout's orientations.

The functions here work on a single reading with numpy. The batched,
autograd-capable twin used for calibration lives in :mod:`coptact.diffmodel`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateBlend, DegenerateNormal, IllConditioned, NoContact
from .geometry import is_rotation, rotation_from_list, rotation_to_list

COINCIDENT_TOL = 1e-9
DEGENERATE_TOL = 1e-9
ZERO_WEIGHT = 1e-8
COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class TaxelLayout:
    """Geometry of one tactile array plus the stress-model hyperparameters.

    ``orientations[i]`` maps taxel-frame vectors into the sensor frame, and
    column ``normal_axis`` of it is the inward surface normal at the taxel.
    ``lam`` is the ridge parameter of the force solve (newtons).
    """

    positions: np.ndarray
    orientations: np.ndarray
    normal_axis: int = 2
    epsilon: float = 0.05
    sigma: float = 0.003
    lam: float = 1e-3
    normal_only: bool = False
    solve_over_all_taxels: bool = False

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        rot = np.asarray(self.orientations, dtype=float).reshape(-1, 3, 3)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orientations", rot)
        if len(pos) != len(rot) or len(pos) == 0:
            raise ValueError("need matching, non-empty positions and orientations")
        if self.normal_axis not in (0, 1, 2):
            raise ValueError("normal_axis must be 0, 1 or 2")
        if not (self.epsilon > 0 and self.sigma > 0 and self.lam >= 0):
            raise ValueError("require epsilon > 0, sigma > 0, lambda >= 0")
        if not np.all(np.isfinite(pos)):
            raise ValueError("taxel positions must be finite")
        normals = rot[:, :, self.normal_axis]
        if np.any(np.abs(np.linalg.norm(normals, axis=1) - 1.0) > 1e-9):
            raise ValueError("taxel normals are not unit length")
        if len(pos) > 1:
            gaps = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
            gaps[np.diag_indices(len(pos))] = np.inf
            if gaps.min() <= 1e-6:
                raise ValueError("taxel positions must be pairwise distinct")

    @property
    def n_taxels(self):
        return len(self.positions)

    @property
    def normals(self):
        return self.orientations[:, :, self.normal_axis]

    def with_orientations(self, orientations):
        return replace(self, orientations=np.asarray(orientations, dtype=float))

    def to_dict(self):
        return {
            "n_taxels": self.n_taxels,
            "positions": self.positions.tolist(),
            "orientations": [rotation_to_list(r) for r in self.orientations],
            "normal_axis": self.normal_axis,
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "lambda": self.lam,
            "normal_only": self.normal_only,
        }

    @classmethod
    def from_dict(cls, d):
        expected = {"n_taxels", "positions", "orientations", "normal_axis", "epsilon", "sigma", "lambda", "normal_only"}
        unknown = set(d) - expected - {"solve_over_all_taxels"}
        if unknown:
            raise ValueError("unknown layout keys: %s" % sorted(unknown))
        missing = {"positions", "orientations"} - set(d)
        if missing:
            raise ValueError("layout is missing %s" % sorted(missing))
        rots = np.stack([rotation_from_list(r) for r in d["orientations"]])
        layout = cls(
            positions=np.asarray(d["positions"], dtype=float),
            orientations=rots,
            normal_axis=int(d.get("normal_axis", 2)),
            epsilon=float(d.get("epsilon", 0.05)),
            sigma=float(d.get("sigma", 0.003)),
            lam=float(d.get("lambda", 1e-3)),
            normal_only=bool(d.get("normal_only", False)),
            solve_over_all_taxels=bool(d.get("solve_over_all_taxels", False)),
        )
        if "n_taxels" in d and int(d["n_taxels"]) != layout.n_taxels:
            raise ValueError("n_taxels=%s disagrees with %d positions" % (d["n_taxels"], layout.n_taxels))
        if not is_rotation(rots):
            raise ValueError("layout orientations must be rotations")
        return layout


@dataclass(frozen=True, eq=False)
class TaxelReading:
    """Per-taxel forces, each in its own taxel frame (newtons)."""

    forces: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.forces, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(f)):
            raise ValueError("taxel forces must be finite")
        object.__setattr__(self, "forces", f)


@dataclass(frozen=True, eq=False)
class CopContact:
    """Resultant contact force applied at a single point, both in the sensor frame."""

    force: np.ndarray
    position: np.ndarray
    active_count: int = 1
    normal: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @property
    def valid(self):
        return self.active_count >= 1

    @classmethod
    def idle(cls):
        """The explicit no-contact observation."""
        return cls(np.zeros(3), np.zeros(3), active_count=0)


def _check_reading(reading, layout):
    if reading.forces.shape != (layout.n_taxels, 3):
        raise ValueError(
            "reading has %d taxels, layout has %d" % (len(reading.forces), layout.n_taxels)
        )


def sensor_frame_forces(reading, layout):
    """Rotate each taxel force into the sensor frame, ``R_i f_i``."""
    return np.einsum("nij,nj->ni", layout.orientations, reading.forces)


def active_set(reading, layout):
    """Indices whose force norm is strictly above ``layout.epsilon``."""
    _check_reading(reading, layout)
    return np.flatnonzero(np.linalg.norm(reading.forces, axis=1) > layout.epsilon)


def estimate_cop_position(reading, layout, active=None):
    """Force-magnitude weighted mean of the active taxel positions."""
    if active is None:
        active = active_set(reading, layout)
    if len(active) == 0:
        raise NoContact("no taxel above threshold %g N" % layout.epsilon)
    mags = np.linalg.norm(reading.forces[active], axis=1)
    return mags @ layout.positions[active] / mags.sum()


def estimate_cop_normal(p_cop, layout, active):
    """Inverse-distance weighted mean of the active taxel normals, normalized.

    A taxel coinciding with ``p_cop`` (closer than 1e-9 m) dominates the
    weighting, so its own normal is returned.
    """
    active = np.asarray(active, dtype=int)
    if len(active) == 0:
        raise NoContact("empty active set")
    dist = np.linalg.norm(layout.positions[active] - p_cop, axis=1)
    normals = layout.normals[active]
    hit = dist < COINCIDENT_TOL
    if np.any(hit):
        total = normals[hit].sum(axis=0)
    else:
        total = (normals / dist[:, None]).sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < DEGENERATE_TOL:
        raise DegenerateNormal("inverse-distance weighted normals cancel")
    return total / norm


def gaussian_weights(p_cop, layout, indices=None):
    pos = layout.positions if indices is None else layout.positions[indices]
    d2 = np.sum((pos - p_cop) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * layout.sigma**2))


def _blend(p_cop, layout, indices):
    """Gaussian weights and blended directions for ``indices``."""
    offset = layout.positions[indices] - p_cop
    dist = np.linalg.norm(offset, axis=1)
    w = np.exp(-(dist**2) / (2.0 * layout.sigma**2))
    v = np.zeros_like(offset)
    far = dist >= COINCIDENT_TOL
    v[far] = offset[far] / dist[far, None]
    w = np.where(far, w, 1.0)
    raw = w[:, None] * layout.normals[indices] + (1.0 - w)[:, None] * v
    norm = np.linalg.norm(raw, axis=1)
    if np.any(norm < DEGENERATE_TOL):
        raise DegenerateBlend("blended direction vanishes for taxel(s) %s" % indices[norm < DEGENERATE_TOL])
    return w, raw / norm[:, None]


def blended_direction(p_cop, taxel_index, n_cop, layout):
    """Direction of the effective normal force at one taxel.

    ``n_cop`` is accepted for signature symmetry with :func:`transfer_matrix`;
    the blend itself only involves the taxel normal and the CoP-to-taxel ray.
    """
    del n_cop
    _, b = _blend(np.asarray(p_cop, dtype=float), layout, np.array([taxel_index]))
    return b[0]


def shear_projection(n_cop):
    n = np.asarray(n_cop, dtype=float)
    return np.eye(3) - np.outer(n, n)


def transfer_matrices(p_cop, n_cop, layout, indices=None):
    """Stack of ``M_i = w_i (b_i n_cop^T + P_shear)`` for ``indices`` (default: all)."""
    if indices is None:
        indices = np.arange(layout.n_taxels)
    indices = np.asarray(indices, dtype=int)
    p_cop = np.asarray(p_cop, dtype=float)
    n_cop = np.asarray(n_cop, dtype=float)
    w, b = _blend(p_cop, layout, indices)
    shear = shear_projection(n_cop)
    return w[:, None, None] * (b[:, :, None] * n_cop[None, None, :] + shear)


def transfer_matrix(p_cop, n_cop, taxel_index, layout):
    return transfer_matrices(p_cop, n_cop, layout, [taxel_index])[0]


def cop_to_taxels(contact, layout, timestamp=0.0):
    """Predict the taxel-frame reading produced by ``contact``.

    The surface normal at the contact is interpolated from every taxel of the
    layout. Taxels whose Gaussian weight falls below 1e-8 read exactly zero.
    """
    p_cop = contact.position
    n_cop = estimate_cop_normal(p_cop, layout, np.arange(layout.n_taxels))
    f_cop = contact.force
    if layout.normal_only:
        f_cop = (f_cop @ n_cop) * n_cop
    out = np.zeros((layout.n_taxels, 3))
    reach = np.flatnonzero(gaussian_weights(p_cop, layout) >= ZERO_WEIGHT)
    if len(reach):
        m = transfer_matrices(p_cop, n_cop, layout, reach)
        f_sensor = m @ f_cop
        out[reach] = np.einsum("nji,nj->ni", layout.orientations[reach], f_sensor)
    return TaxelReading(out, timestamp)


def _solve_normal_equations(gram, rhs):
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        warnings.warn(
            "CoP normal equations condition number %.3g exceeds %.0e" % (cond, COND_LIMIT), IllConditioned, stacklevel=3
        )
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return cho_solve(cho_factor(gram), rhs)


def solve_cop_force(reading, p_cop, layout, active=None, n_cop=None):
    """Ridge least-squares CoP force, ``(A^T A + lam^2 I)^{-1} A^T b``.

    ``A`` stacks the transfer matrices and ``b`` the sensor-frame forces of the
    active taxels (all taxels when ``layout.solve_over_all_taxels``).
    """
    _check_reading(reading, layout)
    if active is None:
        active = active_set(reading, layout)
    if len(active) == 0:
        raise NoContact("no taxel above threshold %g N" % layout.epsilon)
    p_cop = np.asarray(p_cop, dtype=float)
    if n_cop is None:
        n_cop = estimate_cop_normal(p_cop, layout, active)
    rows = np.arange(layout.n_taxels) if layout.solve_over_all_taxels else np.asarray(active)
    a = transfer_matrices(p_cop, n_cop, layout, rows)
    b = sensor_frame_forces(reading, layout)[rows]
    gram = np.einsum("nki,nkj->ij", a, a) + layout.lam**2 * np.eye(3)
    rhs = np.einsum("nki,nk->i", a, b)
    return _solve_normal_equations(gram, rhs)


def taxels_to_cop(reading, layout):
    """Compress a taxel reading into a :class:`CopContact`.

    Raises :class:`NoContact` when no taxel exceeds the threshold; callers that
    want an observation regardless should fall back to :meth:`CopContact.idle`.
    """
    active = active_set(reading, layout)
    p_cop = estimate_cop_position(reading, layout, active)
    n_cop = estimate_cop_normal(p_cop, layout, active)
    f_cop = solve_cop_force(reading, p_cop, layout, active, n_cop)
    if layout.normal_only:
        f_cop = (f_cop @ n_cop) * n_cop
    return CopContact(f_cop, p_cop, len(active), n_cop)
