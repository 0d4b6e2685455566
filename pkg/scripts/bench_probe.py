"""Latent probing on constructed data: linear-probe scores and silhouette over time.

    python scripts/bench_probe.py --seeds 20 --noise 1.0
"""

import argparse

import numpy as np
from scipy.stats import spearmanr

from coptact.probe import LatentTrajectorySet, cluster_latents, linear_latents, linear_probe_fit, probe_score, temporal_cluster_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--separation", type=float, default=12.0)
    ap.add_argument("--dim", type=int, default=32)
    args = ap.parse_args()

    data = linear_latents(110, 100, args.dim, 4, seed=0, noise=0.1)
    train, test = LatentTrajectorySet(data.trajectories[:100]), LatentTrajectorySet(data.trajectories[100:])
    s = probe_score(linear_probe_fit(train, 1e-6), test)
    print("noisy-linear probe (noise 0.1): rmse %s  r2 %s" % (np.round(s["rmse"], 4), np.round(s["r2"], 4)))

    times = list(range(0, 100, 10)) + [99]
    print("seed  spearman  sc_pca@0  sc_pca@99  sc_full@99")
    for seed in range(args.seeds):
        c = cluster_latents([50, 150, 250], 100, 100, args.dim, seed=seed, separation=args.separation, noise=args.noise)
        rows = temporal_cluster_report(c, times)
        sc = [r["sc_pca"] for r in rows]
        print("%4d %9.3f %9.3f %10.3f %11.3f" % (seed, spearmanr(times, sc)[0], sc[0], sc[-1], rows[-1]["sc_full"]))


if __name__ == "__main__":
    main()
