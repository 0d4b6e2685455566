"""Rotation and rigid-frame algebra.

Rotations are plain ``(..., 3, 3)`` float arrays. Every function here is
vectorized over leading axes, which is what the calibration loop relies on
to project all taxel parameters in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSingularValues, RankDeficient

RANK_TOL = 1e-12
DEGENERATE_TOL = 1e-9
SAFE_DIV = 1e-12


def skew(v):
    """Cross-product matrix, ``skew(a) @ b == cross(a, b)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def axis_angle(axis, angle):
    """Rodrigues' formula. ``axis`` need not be normalized."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=float)[..., None, None]
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def random_rotations(n, rng):
    """Haar-uniform rotations from normalized Gaussian quaternions."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def is_rotation(m, tol=1e-9):
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3) or not np.all(np.isfinite(m)):
        return False
    eye_err = np.linalg.norm(np.swapaxes(m, -1, -2) @ m - np.eye(3), axis=(-2, -1))
    det_err = np.abs(np.linalg.det(m) - 1.0)
    return bool(np.all(eye_err < tol) and np.all(det_err < tol))


def svd3(p):
    """Thin SVD of 3x3 matrices through the eigen-decomposition of ``p.T @ p``.

    Returns ``(u, s, v, d)`` with ``p = u @ diag(s) @ v.T``, singular values in
    descending order and ``d = sign(det p)``. The first two left vectors are
    re-orthonormalized and the third is rebuilt from their cross product, so
    ``u`` stays orthogonal to round-off even when ``p`` is badly conditioned.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("rotation parameter has non-finite entries")
    gram = np.swapaxes(p, -1, -2) @ p
    _, v = np.linalg.eigh(gram)
    v = v[..., ::-1]
    det_p = np.linalg.det(p)
    det_v = np.linalg.det(v)

    pv = p @ v
    s1 = np.linalg.norm(pv[..., 0], axis=-1)
    s2_raw = np.linalg.norm(pv[..., 1], axis=-1)
    if np.any(s2_raw < RANK_TOL):
        raise RankDeficient("rotation parameter has rank < 2")
    u1 = pv[..., 0] / s1[..., None]
    u2 = pv[..., 1] - np.sum(u1 * pv[..., 1], axis=-1, keepdims=True) * u1
    u2 /= np.linalg.norm(u2, axis=-1, keepdims=True)
    s2 = np.sum(u2 * pv[..., 1], axis=-1)
    d = np.where(det_p < 0, -1.0, 1.0)
    # det(u) = sign(det p) * det(v)
    u3 = (d * det_v)[..., None] * np.cross(u1, u2)
    # |det p| / (s1 s2) resolves s3 far below the eigh noise floor of s1 * 1e-8
    s3 = np.abs(det_p) / (s1 * s2)
    if np.any(s3 < RANK_TOL):
        raise RankDeficient("smallest singular value below %g" % RANK_TOL)
    u = np.stack([u1, u2, u3], axis=-1)
    s = np.stack([s1, s2, s3], axis=-1)
    return u, s, v, d


def svd_project(p):
    """Nearest rotation in Frobenius norm, ``U diag(1, 1, det(U V^T)) V^T``.

    Raises :class:`RankDeficient` when the smallest singular value is below
    1e-12 (the caller should re-seed that parameter).
    """
    u, _, v, d = svd3(p)
    dd = np.ones(u.shape[:-1])
    dd[..., 2] = d
    return (u * dd[..., None, :]) @ np.swapaxes(v, -1, -2)


def svd_project_gradient(p, upstream):
    """Pull the cotangent ``dL/dR`` back through :func:`svd_project`.

    With ``E = U^T dP V`` the differential of the projection is
    ``U K V^T`` where, for ``i != j`` and ``c = d_i d_j``,
    ``K_ij = d_i (E_ij - c E_ji) / (s_i + c s_j)``. This function applies the
    adjoint of that map. When ``det p < 0`` the denominator contains
    ``s_i - s_3`` and the gradient is undefined at coincident values.
    """
    u, s, v, d = svd3(p)
    upstream = np.asarray(upstream, dtype=float)
    dd = np.ones(s.shape)
    dd[..., 2] = d
    c = dd[..., :, None] * dd[..., None, :]
    denom = s[..., :, None] + c * s[..., None, :]
    off = ~np.eye(3, dtype=bool)
    if np.any((np.abs(denom) < DEGENERATE_TOL) & off & (c < 0)):
        raise DegenerateSingularValues(
            "singular values coincide on a reflected input; projection gradient undefined"
        )
    denom = np.where(np.abs(denom) < SAFE_DIV, np.copysign(SAFE_DIV, denom), denom)
    inv = np.where(off, 1.0 / denom, 0.0)

    m = np.swapaxes(u, -1, -2) @ upstream @ v
    mt = np.swapaxes(m, -1, -2)
    inv_t = np.swapaxes(inv, -1, -2)
    e_bar = dd[..., :, None] * inv * m - c * dd[..., None, :] * inv_t * mt
    return u @ e_bar @ np.swapaxes(v, -1, -2)


def geodesic_angle(a, b):
    """Angle of the relative rotation ``a^T b`` in ``[0, pi]``.

    Uses ``atan2(sin, cos)`` of the relative rotation, which equals the
    clamped ``arccos((tr - 1) / 2)`` but keeps full precision near zero.
    """
    rel = np.swapaxes(np.asarray(a, dtype=float), -1, -2) @ np.asarray(b, dtype=float)
    cos = np.clip((np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    w = np.stack(
        [rel[..., 2, 1] - rel[..., 1, 2], rel[..., 0, 2] - rel[..., 2, 0], rel[..., 1, 0] - rel[..., 0, 1]],
        axis=-1,
    )
    sin = np.linalg.norm(w, axis=-1) / 2.0
    return np.arctan2(sin, cos)


def rotation_to_list(r):
    return [float(x) for x in np.asarray(r, dtype=float).reshape(9)]


def rotation_from_list(values):
    m = np.asarray(values, dtype=float)
    if m.size != 9:
        raise ValueError("rotation must have 9 entries, got %d" % m.size)
    return m.reshape(3, 3)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Pose ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))
        if not is_rotation(self.rotation, tol=1e-6):
            raise ValueError("rigid transform rotation is not in SO(3)")

    @classmethod
    def identity(cls):
        return cls()

    def __matmul__(self, other):
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def apply_vector(self, vectors):
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def matrix(self):
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def allclose(self, other, atol=1e-9):
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )

    def to_dict(self):
        return {"rotation": rotation_to_list(self.rotation), "translation": [float(x) for x in self.translation]}

    @classmethod
    def from_dict(cls, d):
        rot = d.get("rotation")
        rot = np.eye(3) if rot is None else rotation_from_list(rot)
        return cls(rot, d.get("translation", [0.0, 0.0, 0.0]))
