"""Compare every method label at one budget, picking the best eta per method.

    python3 scripts/trend_study.py --epsilon 2 --out-dir results/trend
"""

import argparse
from dataclasses import replace
from pathlib import Path

from dpcoupling.harness import experiments as ex
from dpcoupling.harness.report import report

from _common import study_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=float, default=2.0)
    ap.add_argument("--etas", default="0.002,0.01,0.05")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results/trend")
    a = ap.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    etas = [float(v) for v in a.etas.split(",")]
    results = []
    for m in ex.METHODS:
        runs = [ex.run_method(study_config(a.epsilon, m, eta, a.seed, a.repeats)) for eta in etas]
        best = max(runs, key=lambda r: r.mean_acc)
        best.note = (best.note + "; " if best.note else "") + f"eta={etas[runs.index(best)]:g}"
        results.append(best)
        print(f"{m:16s} acc={best.mean_acc:.4f} +- {best.sd_acc:.4f}  alpha={best.alpha:.3f}  {best.note}")
    ex.write_aggregate_csv(results, out / "methods.csv")
    for p in report([out / "methods.csv"], out):
        print(p)


if __name__ == "__main__":
    main()
