"""Calibration benchmark at the reference scale (2400 samples, Adam lr 0.1, 100 steps).

Prints the loss trajectory summary and per-taxel geodesic errors before and
after, for a noiseless and a noisy dataset.

    python scripts/bench_calibration.py --perturb-deg 30 --noise 0 0.02
"""

import argparse
import time

import numpy as np
import torch

from coptact.calibration import CalibConfig, calibrate
from coptact.kinematics import reference_finger
from coptact.synthetic import (
    CapLayoutSpec,
    ContactSpec,
    NoiseSpec,
    generate_cap_layout,
    perturb_orientations,
    sample_contacts,
    synthesize_dataset,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2400)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--perturb-deg", type=float, default=30.0)
    ap.add_argument("--sigma", type=float, default=0.003)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.02])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)

    layout = generate_cap_layout(CapLayoutSpec(sigma=args.sigma))
    chain = reference_finger()
    rng = np.random.default_rng(args.seed)
    true = perturb_orientations(layout.orientations, np.radians(args.perturb_deg), rng)
    contacts = sample_contacts(layout, ContactSpec(seed=args.seed + 1), args.samples)
    for noise in args.noise:
        data = synthesize_dataset(contacts, layout, true, chain, [0.1, 0.4, 0.5, 0.3], NoiseSpec(force_scale=noise, seed=2))
        start = time.perf_counter()
        rep = calibrate(data, layout, chain, CalibConfig(learning_rate=args.lr, steps=args.steps), true_orientations=true)
        elapsed = time.perf_counter() - start
        before, after = np.degrees(rep.initial_geodesic_errors), np.degrees(rep.geodesic_errors)
        print("force noise %.3f: %.1f s, skipped %d" % (noise, elapsed, rep.skipped_count))
        print("  loss %.3e -> %.3e (ratio %.2e)" % (rep.loss_history[0], rep.final_loss, rep.final_loss / rep.loss_history[0]))
        print("  geodesic error deg: median %.2f -> %.3f, max %.2f -> %.3f" % (np.median(before), np.median(after), before.max(), after.max()))


if __name__ == "__main__":
    main()
