"""(alpha, eta) sweeps at several budgets; prints where the best alpha lands.

    python3 scripts/alpha_drift.py --epsilons 8,2,0.5 --seeds 0,1,2 --out-dir results/drift
"""

import argparse
from pathlib import Path

from dpcoupling.harness import experiments as ex
from dpcoupling.harness.report import report

from _common import study_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilons", default="8,2,0.5")
    ap.add_argument("--alphas", default="0,0.2,0.4,0.6,0.8,1")
    ap.add_argument("--etas", default="0.002,0.01,0.05")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--out-dir", default="results/drift")
    a = ap.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    floats = lambda s: [float(v) for v in s.split(",")]
    for seed in (int(v) for v in a.seeds.split(",")):
        best = []
        for eps in floats(a.epsilons):
            res = ex.sweep(study_config(eps, seed=seed, repeats=a.repeats), floats(a.alphas), floats(a.etas))
            path = out / f"sweep_seed{seed}_eps{eps:g}.csv"
            ex.write_sweep_csv(res, path)
            report([path], out)
            best.append(res.best_cell)
        seq = [c.alpha for c in best]
        verdict = "nondecreasing" if all(y >= x for x, y in zip(seq, seq[1:])) else "NOT monotone"
        print(f"seed {seed}: best alpha " + ", ".join(f"{x:g}" for x in seq) + f"  ({verdict})", flush=True)


if __name__ == "__main__":
    main()
