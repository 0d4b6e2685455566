"""Batched, differentiable taxel -> CoP mapping in torch (float64).

Mirrors :func:`coptact.sensor_model.taxels_to_cop` over a batch of readings
so calibration can backpropagate torque errors into rotation parameters.
Active sets are computed once from the data and held fixed (the threshold
indicator is piecewise constant, so it contributes no gradient).
"""

from __future__ import annotations

import numpy as np
import torch

from . import geometry
from .sensor_model import COINCIDENT_TOL

DTYPE = torch.float64
_TINY = 1e-300


class SvdProject(torch.autograd.Function):
    """R9+SVD projection backed by :mod:`coptact.geometry`, with its analytic adjoint."""

    @staticmethod
    def forward(ctx, p):
        p_np = p.detach().cpu().numpy()
        ctx.save_for_backward(p)
        return torch.as_tensor(geometry.svd_project(p_np), dtype=p.dtype)

    @staticmethod
    def backward(ctx, grad):
        (p,) = ctx.saved_tensors
        g = geometry.svd_project_gradient(p.detach().cpu().numpy(), grad.detach().cpu().numpy())
        return torch.as_tensor(g, dtype=p.dtype)


svd_project = SvdProject.apply


def _safe_norm(x, dim=-1):
    return (x * x).sum(dim).clamp_min(_TINY).sqrt()


def batched_taxels_to_cop(
    forces_sensor,
    active,
    positions,
    normals,
    sigma,
    lam,
    normal_only=False,
    solve_over_all_taxels=False,
):
    """CoP force, position and normal for a batch of sensor-frame readings.

    Args:
        forces_sensor: ``(S, N, 3)`` taxel forces already rotated into the sensor frame.
        active: ``(S, N)`` boolean active-set mask.
        positions: ``(N, 3)`` taxel positions.
        normals: ``(N, 3)`` or ``(S, N, 3)`` unit taxel normals.

    Returns:
        ``(force, position, normal, valid)``; rows with an empty active set
        have ``valid == False`` and carry finite placeholder values.
    """
    positions = torch.as_tensor(positions, dtype=DTYPE)
    active = torch.as_tensor(active, dtype=torch.bool)
    mask = active.to(DTYPE)
    valid = active.any(dim=1)
    if normals.dim() == 2:
        normals = normals.expand(forces_sensor.shape[0], -1, -1)

    mags = _safe_norm(forces_sensor) * mask
    denom = mags.sum(1, keepdim=True)
    denom = torch.where(valid[:, None], denom, torch.ones_like(denom))
    p_cop = (mags @ positions) / denom

    offset = positions[None] - p_cop[:, None, :]
    dist = _safe_norm(offset)
    coincident = (dist < COINCIDENT_TOL) & active
    has_hit = coincident.any(dim=1, keepdim=True)
    idw = torch.where(has_hit, coincident.to(DTYPE), mask / dist.clamp_min(COINCIDENT_TOL))
    n_sum = (idw[..., None] * normals).sum(1)
    n_sum = torch.where(valid[:, None], n_sum, normals[:, 0])
    n_cop = n_sum / _safe_norm(n_sum)[:, None]

    far = dist >= COINCIDENT_TOL
    w = torch.where(far, torch.exp(-(dist**2) / (2.0 * sigma**2)), torch.ones_like(dist))
    v = torch.where(far[..., None], offset / dist.clamp_min(COINCIDENT_TOL)[..., None], torch.zeros_like(offset))
    raw = w[..., None] * normals + (1.0 - w)[..., None] * v
    b = raw / _safe_norm(raw)[..., None]

    eye = torch.eye(3, dtype=DTYPE)
    shear = eye - n_cop[:, :, None] * n_cop[:, None, :]
    m = w[..., None, None] * (b[..., :, None] * n_cop[:, None, None, :] + shear[:, None])

    rows = torch.ones_like(mask) if solve_over_all_taxels else mask
    m_rows = m * rows[..., None, None]
    gram = torch.einsum("snki,snkj->sij", m_rows, m_rows) + (lam**2) * eye
    gram = torch.where(valid[:, None, None], gram, eye.expand_as(gram))
    rhs = torch.einsum("snki,snk->si", m_rows, forces_sensor)
    f_cop = torch.linalg.solve(gram, rhs[..., None])[..., 0]
    if normal_only:
        f_cop = (f_cop * n_cop).sum(-1, keepdim=True) * n_cop
    return f_cop, p_cop, n_cop, valid


def layout_tensors(layout):
    return (
        torch.as_tensor(layout.positions, dtype=DTYPE),
        torch.as_tensor(layout.normals, dtype=DTYPE),
    )


def cop_force_jacobian(reading, layout):
    """Jacobian of the CoP force with respect to sensor-frame taxel forces.

    Returns a ``(3, N, 3)`` array; entry ``[a, i, k]`` is
    ``d f_cop[a] / d f_i[k]``. The magnitude-weighted position is part of the
    differentiated path; the active set is frozen at the given reading.
    """
    from .sensor_model import active_set, sensor_frame_forces

    active = np.zeros((1, layout.n_taxels), dtype=bool)
    active[0, active_set(reading, layout)] = True
    positions, normals = layout_tensors(layout)
    f0 = torch.as_tensor(sensor_frame_forces(reading, layout), dtype=DTYPE)

    def fn(f):
        out, _, _, _ = batched_taxels_to_cop(
            f[None], active, positions, normals, layout.sigma, layout.lam,
            layout.normal_only, layout.solve_over_all_taxels,
        )
        return out[0]

    return torch.autograd.functional.jacobian(fn, f0).numpy()
