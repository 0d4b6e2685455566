"""Round-trip fidelity of the taxel <-> CoP mapping on the reference cap.

Sweeps the Gaussian spread and reports how often cop_to_taxels followed by
taxels_to_cop lands within 5% force / 2 mm position, plus the error that
remains when the solve is handed the true contact point.

    python scripts/bench_round_trip.py --count 1000 --sigma 0.002 0.003 0.006
"""

import argparse

import numpy as np

from coptact.sensor_model import active_set, cop_to_taxels, estimate_cop_normal, solve_cop_force, taxels_to_cop
from coptact.synthetic import CapLayoutSpec, ContactSpec, generate_cap_layout, sample_contacts


def run(sigma, count, seed, min_active):
    layout = generate_cap_layout(CapLayoutSpec(sigma=sigma))
    rows = []
    for c in sample_contacts(layout, ContactSpec(seed=seed), 4 * count):
        r = cop_to_taxels(c, layout)
        act = active_set(r, layout)
        if len(act) < min_active:
            continue
        est = taxels_to_cop(r, layout)
        n_true = estimate_cop_normal(c.position, layout, np.arange(layout.n_taxels))
        f_true_p = solve_cop_force(r, c.position, layout, act, n_true)
        scale = np.linalg.norm(c.force)
        rows.append(
            (np.linalg.norm(est.force - c.force) / scale, np.linalg.norm(est.position - c.position),
             np.linalg.norm(f_true_p - c.force) / scale)
        )
        if len(rows) == count:
            break
    return np.array(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-active", type=int, default=3)
    ap.add_argument("--sigma", type=float, nargs="+", default=[0.002, 0.003, 0.004, 0.006, 0.008])
    args = ap.parse_args()
    print("sigma_mm  n     pass%  force_ok%  pos_ok%  med_force_err  med_pos_mm  med_err_at_true_p")
    for sigma in args.sigma:
        e = run(sigma, args.count, args.seed, args.min_active)
        f_ok, p_ok = e[:, 0] <= 0.05, e[:, 1] <= 2e-3
        print(
            "%7.1f %5d %7.1f %9.1f %8.1f %14.3f %11.2f %18.1e"
            % (1e3 * sigma, len(e), 100 * np.mean(f_ok & p_ok), 100 * f_ok.mean(), 100 * p_ok.mean(),
               np.median(e[:, 0]), 1e3 * np.median(e[:, 1]), np.median(e[:, 2]))
        )


if __name__ == "__main__":
    main()
