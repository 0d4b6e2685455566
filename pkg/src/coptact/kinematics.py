"""Serial revolute chains: forward kinematics, point Jacobians, static torques."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geometry import RigidTransform, axis_angle


@dataclass(frozen=True, eq=False)
class RevoluteJoint:
    """A fixed parent-to-joint offset followed by a rotation about ``axis`` (joint frame)."""

    offset: RigidTransform
    axis: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector, got %s" % axis)
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    joints: tuple
    sensor_offset: RigidTransform = RigidTransform()

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def dof(self):
        return len(self.joints)

    def to_dict(self):
        return {
            "joints": [{"offset": j.offset.to_dict(), "axis": [float(a) for a in j.axis]} for j in self.joints],
            "sensor_offset": self.sensor_offset.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"joints", "sensor_offset"}
        if unknown:
            raise ValueError("unknown chain keys: %s" % sorted(unknown))
        joints = [RevoluteJoint(RigidTransform.from_dict(j.get("offset", {})), j["axis"]) for j in d["joints"]]
        return cls(joints, RigidTransform.from_dict(d.get("sensor_offset", {})))


def reference_finger():
    """The bundled 4-DOF stand-in finger (abduction + three flexion joints)."""
    text = resources.files("coptact.data").joinpath("reference_finger.json").read_text()
    return KinematicChain.from_dict(json.loads(text))


def _joint_frames(chain, q):
    q = np.asarray(q, dtype=float).reshape(-1)
    if len(q) != chain.dof:
        raise ValueError("expected %d joint angles, got %d" % (chain.dof, len(q)))
    pose = RigidTransform()
    origins, axes = [], []
    for joint, angle in zip(chain.joints, q):
        pose = pose @ joint.offset
        origins.append(pose.translation)
        axes.append(pose.rotation @ joint.axis)
        pose = pose @ RigidTransform(axis_angle(joint.axis, angle), np.zeros(3))
    return pose, np.array(origins), np.array(axes)


def forward_kinematics(chain, q):
    """Pose of the sensor frame in the base frame."""
    pose, _, _ = _joint_frames(chain, q)
    return pose @ chain.sensor_offset


def joint_axes(chain, q):
    """Joint origins and unit axes expressed in the base frame, shape ``(dof, 3)`` each."""
    _, origins, axes = _joint_frames(chain, q)
    return origins, axes


def point_jacobian(chain, q, p_base):
    """Linear-velocity Jacobian ``(3, dof)`` of a point fixed to the last link.

    Column ``j`` is ``axis_j x (p - origin_j)``.
    """
    origins, axes = joint_axes(chain, q)
    return np.cross(axes, np.asarray(p_base, dtype=float) - origins).T


def point_jacobian_position_derivative(chain, q):
    """``d J[:, j] / d p = skew(axis_j)``, stacked as ``(dof, 3, 3)``.

    The Jacobian is affine in the attached point, so this is independent of it.
    """
    from .geometry import skew

    _, axes = joint_axes(chain, q)
    return skew(axes)


def equilibrium_torque(jacobian, f, gravity=None):
    """Joint torques holding static equilibrium against external force ``f``.

    ``gravity`` is an optional additive term ``g(q)``; it is neglected
    (treated as zero) by default.
    """
    tau = -np.asarray(jacobian, dtype=float).T @ np.asarray(f, dtype=float)
    if gravity is not None:
        tau = tau + np.asarray(gravity, dtype=float)
    return tau
