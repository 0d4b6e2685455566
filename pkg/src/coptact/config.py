"""Strict run configuration for the command-line workflows.

A config is one JSON (or TOML) document per run. Unknown keys are rejected
with the dotted path of the offending field, and ``--set a.b=value``
overrides are applied before validation.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .synthetic import CapLayoutSpec

SEED_ENV = "COPTACT_SEED"


@dataclass
class ContactSection:
    force_min: float = 0.5
    force_max: float = 5.0
    shear_ratio: float = 1.0
    margin: float = 0.0


@dataclass
class NoiseSection:
    force_scale: float = 0.0
    torque_std: float = 0.0
    q_jitter: float = 0.0


@dataclass
class SynthConfig:
    seed: int = 0
    output_dir: str = "synth_out"
    count: int = 2400
    rate: float = 20.0
    perturb_deg: float = 30.0
    q_nominal: list = field(default_factory=lambda: [0.1, 0.4, 0.5, 0.3])
    chain: Optional[str] = None
    torque_from: str = "estimate"
    cap: CapLayoutSpec = field(default_factory=CapLayoutSpec)
    contacts: ContactSection = field(default_factory=ContactSection)
    noise: NoiseSection = field(default_factory=NoiseSection)


@dataclass
class CalibSection:
    learning_rate: float = 0.1
    steps: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init: str = "nominal"


@dataclass
class CalibrateConfig:
    seed: int = 0
    output_dir: str = "calib_out"
    layout: str = "synth_out/layout.json"
    dataset: str = "synth_out/dataset.csv"
    manifest: Optional[str] = None
    chain: Optional[str] = None
    calib: CalibSection = field(default_factory=CalibSection)


@dataclass
class MapConfig:
    seed: int = 0
    output_dir: str = "map_out"
    direction: str = "to_cop"
    layout: str = "layout.json"
    input: str = "readings.csv"
    output: Optional[str] = None


@dataclass
class ProbeSection:
    kind: str = "step"
    duration: float = 2.0
    amplitude: float = 0.5
    f_start: float = 0.2
    f_end: float = 3.0
    sample_rate: float = 100.0


@dataclass
class ReferenceSection:
    hidden: Optional[dict] = None
    noise_std: float = 0.0
    trajectories: Optional[list] = None


@dataclass
class SysidConfig:
    seed: int = 0
    output_dir: str = "sysid_out"
    probes: list = field(default_factory=lambda: [ProbeSection("step"), ProbeSection("ramp"), ProbeSection("chirp")])
    bounds: Optional[dict] = None
    budget: int = 100
    n_init: Optional[int] = None
    n_candidates: int = 2000
    dt: float = 1e-3
    weights: Optional[list] = None
    random_search: bool = False
    trust_region: bool = True
    reference: ReferenceSection = field(default_factory=ReferenceSection)


@dataclass
class ProbeDataSection:
    manifest: Optional[str] = None
    synthetic: Optional[str] = None  # "linear" | "clusters"
    n_traj: int = 110
    steps: int = 100
    dim: int = 32
    n_targets: int = 4
    labels: list = field(default_factory=lambda: [50, 150, 250])
    per_label: int = 100
    noise: float = 0.0


@dataclass
class ProbeConfig:
    seed: int = 0
    output_dir: str = "probe_out"
    data: ProbeDataSection = field(default_factory=ProbeDataSection)
    ridge: float = 1e-6
    n_train: int = 1000
    n_test: int = 100
    pca_k: int = 2
    times: Optional[list] = None


# element types of list-valued fields holding sections
_LIST_ITEMS = {(SysidConfig, "probes"): ProbeSection}

COMMAND_CONFIGS = {
    "synth": SynthConfig,
    "calibrate": CalibrateConfig,
    "map": MapConfig,
    "sysid": SysidConfig,
    "probe": ProbeConfig,
}


def _check_scalar(value, hint, where):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_scalar(value, args[0], where)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("%s: expected a number, got %r" % (where, value))
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("%s: expected an integer, got %r" % (where, value))
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError("%s: expected true/false, got %r" % (where, value))
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError("%s: expected a string, got %r" % (where, value))
        return value
    if hint in (list, dict) or typing.get_origin(hint) in (list, dict):
        base = typing.get_origin(hint) or hint
        if not isinstance(value, base):
            raise ConfigError("%s: expected a %s, got %r" % (where, base.__name__, value))
        return value
    return value


def build(cls, data, where=""):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("%s: expected an object, got %r" % (where or "<root>", data))
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError("%s: unknown key(s) %s" % (where or "<root>", ", ".join(unknown)))
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = build(hint, value, path)
        elif (cls, name) in _LIST_ITEMS:
            if not isinstance(value, list):
                raise ConfigError("%s: expected a list" % path)
            kwargs[name] = [build(_LIST_ITEMS[cls, name], v, f"{path}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[name] = _check_scalar(value, hint, path)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError("%s: %s" % (where or "<root>", exc)) from exc


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("--set expects key=value, got %r" % item)
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError("--set %s: %s is not a section" % (key, p))
        node[parts[-1]] = _parse_value(raw)
    return data


def read_config_file(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("%s: %s" % (path, exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s: line %d column %d: %s" % (path, exc.lineno, exc.colno, exc.msg)) from exc


def load_config(command, path=None, overrides=None, env=None):
    """Parse, override and validate the config for ``command``."""
    env = os.environ if env is None else env
    data = read_config_file(path) if path else {}
    data = apply_overrides(data, overrides)
    if SEED_ENV in env:
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError("%s must be an integer" % SEED_ENV) from exc
    return build(COMMAND_CONFIGS[command], data)
