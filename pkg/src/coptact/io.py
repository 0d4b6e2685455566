"""File formats: layout/chain JSON and the CSV streams used by the CLI.

Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kinematics import KinematicChain
from .sensor_model import TaxelLayout
from .synthetic import CalibDataset


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path, required=None):
    """Header and float matrix of a numeric CSV; ``required`` columns must be present."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError("%s: empty file (no header)" % path)
    header = [h.strip() for h in rows[0]]
    missing = [c for c in (required or []) if c not in header]
    if missing:
        raise ConfigError("%s: missing column(s) %s" % (path, ", ".join(missing)))
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc
    return header, data


_FLOAT_MARK = re.compile(r'"\\u0000f([^"]*)\\u0000"')


def _mark_floats(obj):
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _mark_floats(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            return None
        return "\0f" + fmt(obj) + "\0"
    return obj


def dumps_json(obj):
    """JSON text with every float at 17 significant digits; NaN/inf become null."""
    return _FLOAT_MARK.sub(r"\1", json.dumps(_mark_floats(obj), indent=2)) + "\n"


def dump_json(path, obj):
    text = dumps_json(obj)
    with open(path, "w") as fh:
        fh.write(text)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s: line %d column %d: %s" % (path, exc.lineno, exc.colno, exc.msg)) from exc


def save_layout(path, layout):
    dump_json(path, layout.to_dict())


def load_layout(path):
    try:
        return TaxelLayout.from_dict(load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc


def load_chain(path):
    try:
        return KinematicChain.from_dict(load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc


def force_columns(n_taxels):
    return [f"f{ax}_{i}" for i in range(n_taxels) for ax in "xyz"]


def write_readings(path, times, forces):
    forces = np.asarray(forces, dtype=float)
    rows = np.hstack([np.asarray(times, dtype=float)[:, None], forces.reshape(len(forces), -1)])
    write_csv(path, ["t"] + force_columns(forces.shape[1]), rows)


def read_readings(path, n_taxels):
    cols = ["t"] + force_columns(n_taxels)
    header, data = read_csv(path, cols)
    idx = [header.index(c) for c in cols]
    data = data[:, idx]
    return data[:, 0], data[:, 1:].reshape(len(data), n_taxels, 3)


COP_COLUMNS = ["t", "fx", "fy", "fz", "px", "py", "pz", "active_count", "valid"]


def write_cops(path, times, contacts):
    rows = []
    for t, c in zip(times, contacts):
        rows.append([t, *c.force, *c.position, int(c.active_count), c.valid])
    write_csv(path, COP_COLUMNS, rows)


def read_cops(path):
    """Times, forces ``(M, 3)``, positions ``(M, 3)`` and validity flags of a CoP CSV."""
    header, data = read_csv(path, COP_COLUMNS[:7])
    col = {h: i for i, h in enumerate(header)}
    valid = data[:, col["valid"]] != 0 if "valid" in col else np.ones(len(data), dtype=bool)
    return (
        data[:, col["t"]],
        data[:, [col["fx"], col["fy"], col["fz"]]],
        data[:, [col["px"], col["py"], col["pz"]]],
        valid,
    )


def dataset_columns(dof, n_taxels):
    return ["t"] + [f"q{j}" for j in range(dof)] + [f"tau{j}" for j in range(dof)] + force_columns(n_taxels)


def write_dataset(path, dataset):
    dof = dataset.q.shape[1]
    n = dataset.forces.shape[1]
    rows = np.hstack([dataset.t[:, None], dataset.q, dataset.tau, dataset.forces.reshape(len(dataset), 3 * n)])
    write_csv(path, dataset_columns(dof, n), rows)


def read_dataset(path, n_taxels, dof=4):
    cols = dataset_columns(dof, n_taxels)
    header, data = read_csv(path, cols)
    data = data[:, [header.index(c) for c in cols]]
    return CalibDataset(
        data[:, 0],
        data[:, 1 : 1 + dof],
        data[:, 1 + dof : 1 + 2 * dof],
        data[:, 1 + 2 * dof :].reshape(len(data), n_taxels, 3),
    )


def write_trajectory(path, traj, simulated=None):
    header = ["t", "q_target", "q_measured"]
    cols = [traj.times, traj.target, traj.measured]
    if simulated is not None:
        header.append("q_sim")
        cols.append(simulated.measured)
    write_csv(path, header, np.column_stack(cols))


def read_trajectory(path):
    from .sysid import Trajectory

    header, data = read_csv(path, ["t", "q_target", "q_measured"])
    return Trajectory(data[:, header.index("t")], data[:, header.index("q_target")], data[:, header.index("q_measured")])


def write_latent_trajectory(path, traj):
    d = traj.latents.shape[1]
    k = np.asarray(traj.targets).reshape(len(traj.targets), -1).shape[1]
    t = traj.times if traj.times is not None else np.arange(len(traj.latents), dtype=float)
    header = ["t"] + [f"latent_{i}" for i in range(d)] + [f"target_{i}" for i in range(k)]
    write_csv(path, header, np.column_stack([t, traj.latents, np.asarray(traj.targets).reshape(len(t), -1)]))


def read_latent_trajectory(path, label=None):
    from .probe import LatentTrajectory

    header, data = read_csv(path, ["t"])
    lat = [i for i, h in enumerate(header) if h.startswith("latent_")]
    tgt = [i for i, h in enumerate(header) if h.startswith("target_")]
    if not lat:
        raise ConfigError("%s: no latent_* columns" % path)
    return LatentTrajectory(data[:, lat], data[:, tgt], label=label, times=data[:, header.index("t")])


def resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base) / p
