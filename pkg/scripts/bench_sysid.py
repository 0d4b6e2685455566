"""Actuator identification: Bayesian optimization against a random-search baseline.

For each hidden plant, reports the per-probe MSE of the BO estimate as a
fraction of the median MSE of uniform random parameter draws.

    python scripts/bench_sysid.py --budget 100 --baseline 100
"""

import argparse
import time

import numpy as np

from coptact.errors import Unstable
from coptact.sysid import ActuatorParams, BOConfig, Bounds, bayes_opt_identify, default_probes, simulate_actuator, trajectory_mse

PLANTS = [
    ActuatorParams(3.0, 0.08, 0.01, 0.02, 0.006),
    ActuatorParams(1.2, 0.15, 0.03, 0.005, 0.012),
    ActuatorParams(4.5, 0.03, 0.004, 0.04, 0.003),
]


def probe_mse(params, probe, ref):
    try:
        return trajectory_mse(simulate_actuator(params, probe), ref)
    except Unstable:
        return 1e6


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=int, default=100)
    ap.add_argument("--baseline", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--linear-objective", action="store_true", help="fit the GP to raw rather than log MSE")
    ap.add_argument("--global-ei", action="store_true", help="maximize EI over the whole box (no trust region)")
    args = ap.parse_args()
    probes, bounds = default_probes(), Bounds.default()
    for k, hidden in enumerate(PLANTS):
        ref = [simulate_actuator(hidden, p) for p in probes]
        start = time.perf_counter()
        res = bayes_opt_identify(ref, probes, bounds, BOConfig(budget=args.budget, seed=args.seed + k, log_objective=not args.linear_objective, trust_region=not args.global_ei))
        elapsed = time.perf_counter() - start
        rng = np.random.default_rng(100 + k)
        draws = [ActuatorParams.from_array(bounds.from_unit(u)) for u in rng.uniform(size=(args.baseline, 5))]
        print("plant %d (%.1f s): best loss %.3e" % (k, elapsed, res.best_loss))
        for p, r in zip(probes, ref):
            bo = probe_mse(res.best_params, p, r)
            med = np.median([probe_mse(d, p, r) for d in draws])
            print("  %-5s BO %.3e  random median %.3e  ratio %.2e" % (p.kind, bo, med, bo / med))
        print("  hidden %s" % np.round(hidden.as_array(), 4))
        print("  found  %s" % np.round(res.best_params.as_array(), 4))


if __name__ == "__main__":
    main()
