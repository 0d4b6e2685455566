"""Command-line front end: ``coptact {synth,calibrate,map,sysid,probe}``.

Exit codes: 0 success, 2 config or schema error, 3 calibration degenerate
(every sample skipped), 4 sysid degenerate (every evaluation unstable).
"""

from __future__ import annotations

import argparse
import datetime
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_config, to_dict
from .errors import AllSamplesSkipped, ConfigError, NoContact

log = logging.getLogger("coptact")

EXIT_OK, EXIT_CONFIG, EXIT_CALIB, EXIT_SYSID = 0, 2, 3, 4


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chain(path, fallback=None):
    from .kinematics import KinematicChain, reference_finger

    if path:
        return io.load_chain(path)
    if fallback is not None:
        return KinematicChain.from_dict(fallback)
    return reference_finger()


def cmd_synth(cfg):
    from .sensor_model import CopContact
    from .synthetic import ContactSpec, NoiseSpec, generate_cap_layout, perturb_orientations, sample_contacts
    from .synthetic import synthesize_dataset

    if cfg.count < 0:
        raise ConfigError("count: must be >= 0")
    if len(cfg.q_nominal) != 4 and cfg.chain is None:
        raise ConfigError("q_nominal: the reference finger has 4 joints")
    chain = _chain(cfg.chain)
    if len(cfg.q_nominal) != chain.dof:
        raise ConfigError("q_nominal: expected %d joint angles" % chain.dof)
    try:
        contact_spec = ContactSpec(seed=0, **to_dict(cfg.contacts))
    except ValueError as exc:
        raise ConfigError("contacts: %s" % exc) from exc
    seq = np.random.SeedSequence(cfg.seed)
    s_contacts, s_perturb, s_noise = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    contact_spec.seed = s_contacts

    layout = generate_cap_layout(cfg.cap)
    true = perturb_orientations(layout.orientations, np.radians(cfg.perturb_deg), np.random.default_rng(s_perturb))
    contacts = sample_contacts(layout, contact_spec, cfg.count)
    noise = NoiseSpec(seed=s_noise, **to_dict(cfg.noise))
    dataset = synthesize_dataset(
        contacts, layout, true, chain, cfg.q_nominal, noise, rate=cfg.rate, torque_from=cfg.torque_from
    )

    out = _outdir(cfg)
    io.save_layout(out / "layout.json", layout)
    io.write_dataset(out / "dataset.csv", dataset)
    io.write_cops(out / "contacts.csv", dataset.t, [CopContact(c.force, c.position) for c in contacts])
    io.dump_json(
        out / "manifest.json",
        {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "seed": cfg.seed,
            "config": to_dict(cfg),
            "n_samples": len(dataset),
            "chain": chain.to_dict(),
            "true_orientations": [[float(x) for x in r.reshape(9)] for r in true],
            "nominal_orientations": [[float(x) for x in r.reshape(9)] for r in layout.orientations],
        },
    )
    print("wrote %d samples to %s" % (len(dataset), out))
    return EXIT_OK


def cmd_calibrate(cfg):
    from .calibration import CalibConfig, calibrate

    layout = io.load_layout(cfg.layout)
    manifest = io.load_json(cfg.manifest) if cfg.manifest else {}
    chain = _chain(cfg.chain, manifest.get("chain"))
    dataset = io.read_dataset(cfg.dataset, layout.n_taxels, chain.dof)
    true = None
    if manifest.get("true_orientations"):
        true = np.array(manifest["true_orientations"], dtype=float).reshape(-1, 3, 3)
    try:
        config = CalibConfig(seed=cfg.seed, **to_dict(cfg.calib))
    except ValueError as exc:
        raise ConfigError("calib: %s" % exc) from exc
    if len(dataset) == 0:
        print("error: dataset has no samples", file=sys.stderr)
        return EXIT_CALIB
    report = calibrate(dataset, layout, chain, config, true_orientations=true)

    out = _outdir(cfg)
    io.dump_json(out / "report.json", report.to_dict())
    io.write_csv(out / "loss_history.csv", ["step", "loss"], list(enumerate(report.loss_history)))
    print("final loss %.6e (initial %.6e)" % (report.final_loss, report.loss_history[0]))
    if report.geodesic_errors is not None:
        print(
            "median geodesic error %.4f deg (initial %.4f deg)"
            % (np.degrees(np.median(report.geodesic_errors)), np.degrees(np.median(report.initial_geodesic_errors)))
        )
    return EXIT_OK


def cmd_map(cfg):
    from .sensor_model import CopContact, cop_to_taxels, taxels_to_cop, TaxelReading

    layout = io.load_layout(cfg.layout)
    out = _outdir(cfg)
    if cfg.direction == "to_cop":
        times, forces = io.read_readings(cfg.input, layout.n_taxels)
        contacts = []
        for t, f in zip(times, forces):
            try:
                contacts.append(taxels_to_cop(TaxelReading(f, t), layout))
            except NoContact:
                contacts.append(CopContact.idle())
        path = Path(cfg.output) if cfg.output else out / "cops.csv"
        io.write_cops(path, times, contacts)
    elif cfg.direction == "to_taxels":
        times, forces, positions, valid = io.read_cops(cfg.input)
        readings = np.zeros((len(times), layout.n_taxels, 3))
        for k in range(len(times)):
            if valid[k]:
                readings[k] = cop_to_taxels(CopContact(forces[k], positions[k]), layout).forces
        path = Path(cfg.output) if cfg.output else out / "readings.csv"
        io.write_readings(path, times, readings)
    else:
        raise ConfigError("direction: must be to_cop or to_taxels, got %r" % cfg.direction)
    print("wrote %s" % path)
    return EXIT_OK


def cmd_sysid(cfg):
    from .sysid import ActuatorParams, BOConfig, Bounds, ProbeSequence, bayes_opt_identify, simulate_actuator
    from .sysid import PARAM_NAMES, Trajectory

    try:
        probes = [ProbeSequence(**to_dict(p)) for p in cfg.probes]
        bounds = Bounds.from_dict(cfg.bounds) if cfg.bounds else Bounds.default()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("probes/bounds: %s" % exc) from exc
    if not probes:
        raise ConfigError("probes: need at least one probe")

    ref_cfg = cfg.reference
    if ref_cfg.trajectories:
        if len(ref_cfg.trajectories) != len(probes):
            raise ConfigError("reference.trajectories: need one file per probe")
        reference = [io.read_trajectory(p) for p in ref_cfg.trajectories]
        hidden = None
    else:
        try:
            hidden = ActuatorParams(**(ref_cfg.hidden or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError("reference.hidden: %s" % exc) from exc
        rng = np.random.default_rng(cfg.seed)
        reference = []
        for p in probes:
            traj = simulate_actuator(hidden, p, cfg.dt)
            if ref_cfg.noise_std > 0:
                traj = Trajectory(traj.times, traj.target, traj.measured + rng.normal(0, ref_cfg.noise_std, len(traj.times)))
            reference.append(traj)

    bo = BOConfig(budget=cfg.budget, n_init=cfg.n_init, n_candidates=cfg.n_candidates, seed=cfg.seed,
                  random_search=cfg.random_search, trust_region=cfg.trust_region)
    try:
        result = bayes_opt_identify(reference, probes, bounds, bo, cfg.weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = _outdir(cfg)
    io.dump_json(
        out / "best_params.json",
        {
            "params": result.best_params.to_dict(),
            "loss": result.best_loss,
            "bounds": bounds.to_dict(),
            "hidden": hidden.to_dict() if hidden else None,
        },
    )
    rows = [[i, *[h["params"][n] for n in PARAM_NAMES], h["loss"], h["unstable"], h["best"]] for i, h in enumerate(result.history)]
    io.write_csv(out / "history.csv", ["iter", *PARAM_NAMES, "loss", "unstable", "best"], rows)
    if all(h["unstable"] for h in result.history):
        print("error: every evaluation was unstable", file=sys.stderr)
        return EXIT_SYSID
    for i, (p, ref) in enumerate(zip(probes, reference)):
        io.write_trajectory(out / f"probe_{i}_{p.kind}.csv", ref, simulate_actuator(result.best_params, p, cfg.dt))
    print("best loss %.6e" % result.best_loss)
    return EXIT_OK


def _probe_data(cfg):
    from .probe import LatentTrajectorySet, cluster_latents, linear_latents

    d = cfg.data
    if d.manifest:
        manifest = io.load_json(d.manifest)
        base = Path(d.manifest).parent
        trajs = [io.read_latent_trajectory(io.resolve(base, e["file"]), e.get("label")) for e in manifest["trajectories"]]
        try:
            return LatentTrajectorySet(trajs)
        except ValueError as exc:
            raise ConfigError("%s: %s" % (d.manifest, exc)) from exc
    if d.synthetic == "linear":
        return linear_latents(d.n_traj, d.steps, d.dim, d.n_targets, seed=cfg.seed, noise=d.noise)
    if d.synthetic == "clusters":
        return cluster_latents(d.labels, d.per_label, d.steps, d.dim, seed=cfg.seed)
    raise ConfigError("data: set either manifest or synthetic (linear | clusters)")


def _split(n, n_train, n_test):
    if n >= n_train + n_test:
        return slice(0, n_train), slice(n_train, n_train + n_test)
    k = min(n - 1, max(1, int(round(n * n_train / (n_train + n_test)))))
    return slice(0, k), slice(k, n)


def cmd_probe(cfg):
    from .probe import LatentTrajectorySet, linear_probe_fit, pca_project, probe_score, temporal_cluster_report

    data = _probe_data(cfg)
    tr, te = _split(len(data), cfg.n_train, cfg.n_test)
    train = LatentTrajectorySet(data.trajectories[tr])
    test = LatentTrajectorySet(data.trajectories[te])
    weights = linear_probe_fit(train, cfg.ridge)
    score = probe_score(weights, test, strict=False)

    steps = min(len(t.latents) for t in data.trajectories)
    times = cfg.times if cfg.times is not None else sorted(set(np.linspace(0, steps - 1, 11).astype(int).tolist()))
    labels = data.labels
    clustered = len(set(labels)) >= 2 and len(set(labels)) < len(labels)
    sc_rows = temporal_cluster_report(data, times, cfg.pca_k) if clustered else []

    out = _outdir(cfg)
    report = {
        "targets": [
            {"target": i, "rmse": float(r), "r2": None if np.isnan(q) else float(q)}
            for i, (r, q) in enumerate(zip(score["rmse"], score["r2"]))
        ],
        "n_train": len(train),
        "n_test": len(test),
        "sc_over_time": [{"time": int(r["time"]), "sc_pca": r["sc_pca"], "sc_full": r["sc_full"]} for r in sc_rows],
        "sc_space": "sc_pca: silhouette on the first %d principal components; sc_full: on the raw latents" % cfg.pca_k,
    }
    io.dump_json(out / "probe_report.json", report)
    io.write_csv(out / "sc_over_time.csv", ["time", "sc_pca", "sc_full"], [[r["time"], r["sc_pca"], r["sc_full"]] for r in sc_rows])

    last = times[-1]
    pca = pca_project(data.at_step(last), cfg.pca_k)
    label_ids = {lab: i for i, lab in enumerate(dict.fromkeys(labels))}
    rows = [[last, k, label_ids[labels[k]], *pca.scores[k]] for k in range(len(labels))]
    io.write_csv(out / "pca_scores.csv", ["time", "trajectory", "label_index", *[f"pc{i + 1}" for i in range(cfg.pca_k)]], rows)
    print("probe r2: %s" % ", ".join("nan" if np.isnan(v) else "%.4f" % v for v in score["r2"]))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "calibrate": cmd_calibrate,
    "map": cmd_map,
    "sysid": cmd_sysid,
    "probe": cmd_probe,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="coptact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="JSON or TOML run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--threads", type=int, default=1, help="intra-op threads (default 1, bitwise reproducible)")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    import torch

    torch.set_num_threads(max(1, args.threads))
    try:
        cfg = load_config(args.command, args.config, args.set)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except AllSamplesSkipped as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CALIB


if __name__ == "__main__":
    sys.exit(main())
