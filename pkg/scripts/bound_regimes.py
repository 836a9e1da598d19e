"""Tabulate the gradient-norm bounds along T, B, xi and (mu, n) and check the tuning guidelines.

    python3 scripts/bound_regimes.py > bounds.csv
"""

import csv
import sys
from dataclasses import asdict

from dpcoupling.bounds import GUIDELINES, BoundInputs, regime_report


def main():
    base = BoundInputs(smoothness=1.0, loss0=1.0, xi=1.0, batch=100, d=10_000, c=0.1, iterations=10**5,
                       n_priv=10**4, mu=1.0)
    rows, verdicts = regime_report(
        base,
        iterations=[10**4, 10**5, 10**6, 10**7],
        batches=[10, 100, 1000],
        xis=[0.25, 0.5, 1.0, 2.0],
        mu_n=[(0.5, 10**4), (1.0, 10**4), (1.0, 4 * 10**4), (2.0, 4 * 10**4)],
    )
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(list(asdict(rows[0])))
    for r in rows:
        w.writerow(list(asdict(r).values()))
    for key, ok in verdicts.items():
        print(f"{key}: {'holds' if ok else 'does not hold'} - {GUIDELINES[key]}", file=sys.stderr)


if __name__ == "__main__":
    main()
