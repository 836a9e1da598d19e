"""Command-line entry point ``dpc``.

Subcommands: split, train, sweep, compare, report, account, alpha, bound.
Tabular output goes to stdout as CSV unless ``--out`` is given.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import accountant
from .alpha_solver import (
    CLAIMED_DIRECTION,
    ConvexAlphaInputs,
    NonConvexAlphaInputs,
    corollary_alpha,
    corollary_alpha_monotonicity_table,
    recommend_alpha,
    solve_convex_alpha,
)
from .bounds import BoundInputs, HEURISTIC_K, lemma1_approx, lemma1_x, onlypub_threshold, theorem2_threshold
from .data import read_csv, write_csv
from .harness import experiments as ex
from .harness.config import ConfigError, load_config
from .harness.datasets import SplitSpec, split_dataset, synth_classification, synth_regression
from .harness.report import ReportError, report
from .optimizer import write_metrics_csv


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(header, rows, out=None):
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out:
            fh.close()


def _g(v):
    return repr(float(v)) if isinstance(v, float) else v


def cmd_split(a):
    if a.input:
        ds = read_csv(a.input)
    elif a.synth == "classification":
        ds = synth_classification(a.n, a.p, a.class_sep, a.data_seed)
    else:
        ds = synth_regression(a.n, a.p, a.noise_sd, a.data_seed)
    pub, priv = split_dataset(ds, SplitSpec(a.r_pub, a.seed))
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(pub, out / "public.csv")
    write_csv(priv, out / "private.csv")
    print(f"public={len(pub)} private={len(priv)} -> {out}")


def cmd_train(a):
    cfg = load_config(a.config)
    if a.method:
        cfg = replace(cfg, method=a.method)
    outcome = ex.run_once(cfg, a.repeat)
    write_metrics_csv(outcome.rows, a.out)
    if a.aggregate:
        ex.write_aggregate_csv([ex.run_method(cfg)], a.aggregate)


def cmd_sweep(a):
    cfg = load_config(a.config)
    res = ex.sweep(cfg, _floats(a.alphas), _floats(a.etas))
    ex.write_sweep_csv(res, a.out)
    bc = res.best_cell
    if bc is not None:
        print(f"best alpha={bc.alpha:g} eta={bc.eta:g} mean_acc={bc.mean_acc:.4f}", file=sys.stderr)


def cmd_compare(a):
    cfg = load_config(a.config)
    methods = a.methods.split(",") if a.methods else ex.METHODS
    ex.write_aggregate_csv(ex.compare_methods(cfg, methods), a.out)


def cmd_report(a):
    for p in report(a.files, a.out_dir):
        print(p)


def cmd_account(a):
    given = [v is not None for v in (a.epsilon, a.mu, a.sigma)]
    if sum(given) != 1:
        raise SystemExit("account: give exactly one of --epsilon, --mu, --sigma")
    delta = a.delta if a.delta is not None else accountant.delta_rule(a.n)
    if a.sigma is not None:
        lvl = accountant.PrivacyLevel.from_sigma(a.n, a.batch, a.steps, a.sigma, delta)
    elif a.mu is not None:
        lvl = accountant.PrivacyLevel.from_mu(a.n, a.batch, a.steps, a.mu, delta)
    else:
        lvl = accountant.PrivacyLevel.from_epsilon(a.n, a.batch, a.steps, a.epsilon, delta)
    approx = accountant.sigma_approx(a.n, a.batch, a.steps, lvl.mu) if lvl.mu > 0 else math.inf
    _emit(["epsilon", "delta", "mu", "sigma", "sigma_approx", "n_priv", "batch", "steps"],
          [[_g(lvl.epsilon), _g(lvl.delta), _g(lvl.mu), _g(lvl.sigma), _g(approx), a.n, a.batch, a.steps]], a.out)


def cmd_alpha(a):
    if a.kind == "convex":
        inp = ConvexAlphaInputs(a.distance, a.d, a.d_vc, a.mu, a.n_pub, a.n_priv, a.variance)
        _emit(["alpha", "opt_coef", "gen_coef"], [[_g(solve_convex_alpha(inp)), _g(inp.opt_coef), _g(inp.gen_coef)]], a.out)
    elif a.kind == "corollary":
        base = NonConvexAlphaInputs(a.batch, a.L, a.loss0, a.sigma, a.d)
        if a.table:
            tb = corollary_alpha_monotonicity_table(base, a.table, _floats(a.grid))
            rows = [[a.table, _g(v), _g(al)] for v, al in tb.rows()]
            _emit(["axis", "value", "alpha"], rows, a.out)
            print(f"{a.table}: observed {tb.observed}, claimed {tb.claimed}", file=sys.stderr)
        else:
            _emit(["alpha"], [[_g(corollary_alpha(base))]], a.out)
    else:
        cfg = load_config(a.config)
        plan = ex.method_plan("Coupling", cfg.coupling.schedule)
        problem = ex.build_problem(cfg, 0, plan.data)
        n_priv, B = len(problem.private), cfg.coupling.batch
        T = (n_priv // B) * cfg.coupling.epochs
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rec = recommend_alpha(problem, cfg.privacy.budget(n_priv), B, T, seed=cfg.coupling.seed)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        d = rec.as_dict()
        keys = [k for k in d if k != "notes"]
        _emit(keys, [[_g(d[k]) if d[k] is not None else "" for k in keys]], a.out)


def cmd_bound(a):
    kw = dict(smoothness=a.L, loss0=a.loss0, xi=a.xi, batch=a.batch, d=a.d, c=a.c, iterations=a.T)
    if a.sigma is not None:
        inp = BoundInputs(sigma=a.sigma, **kw)
    else:
        inp = BoundInputs(n_priv=a.n_priv, mu=a.mu, **kw)
    th = theorem2_threshold(inp, a.k)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lem = lemma1_approx(inp)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(["y", "grad_norm_bound", "lemma1", "x", "onlypub_sq_bound", "sigma"],
          [[_g(th.y), _g(th.g_norm_bound), _g(lem), _g(lemma1_x(inp)), _g(onlypub_threshold(inp)),
            _g(inp.noise_multiplier)]], a.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpc", description="Coupled public/private DP-SGD lab")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("split", help="split a dataset into public.csv and private.csv")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="dataset CSV")
    src.add_argument("--synth", choices=["classification", "regression"])
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--p", type=int, default=20)
    s.add_argument("--class-sep", type=float, default=2.0)
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--r-pub", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_split)

    s = sub.add_parser("train", help="one training run; writes per-epoch metrics")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=ex.METHODS)
    s.add_argument("--repeat", type=int, default=0)
    s.add_argument("--aggregate", help="also run all repeats and write their aggregate here")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="(alpha, eta) grid of constant-alpha Coupling runs")
    s.add_argument("--config", required=True)
    s.add_argument("--alphas", required=True, help="comma-separated")
    s.add_argument("--etas", required=True, help="comma-separated")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("compare", help="run several method labels and write their aggregates")
    s.add_argument("--config", required=True)
    s.add_argument("--methods", help="comma-separated labels (default: all)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_compare)

    s = sub.add_parser("report", help="SVG charts and summary.csv from result files")
    s.add_argument("files", nargs="*")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("account", help="convert between epsilon, mu and sigma")
    s.add_argument("--n", type=int, required=True, help="private sample count")
    s.add_argument("--batch", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--delta", type=float, help="default n^-1.1")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_account)

    s = sub.add_parser("alpha", help="optimal alpha: convex, corollary or recommend")
    asub = s.add_subparsers(dest="kind", required=True)
    c = asub.add_parser("convex")
    for name, typ in (("--distance", float), ("--d", int), ("--d-vc", float), ("--mu", float),
                      ("--n-pub", int), ("--n-priv", int), ("--variance", float)):
        c.add_argument(name, type=typ, required=True)
    c.add_argument("--out")
    c = asub.add_parser("corollary")
    c.add_argument("--batch", type=int, required=True)
    c.add_argument("--L", type=float, required=True)
    c.add_argument("--loss0", type=float, required=True)
    c.add_argument("--sigma", type=float, required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--table", choices=sorted(CLAIMED_DIRECTION), help="vary one input along --grid")
    c.add_argument("--grid", default="")
    c.add_argument("--out")
    c = asub.add_parser("recommend", help="closed-form alpha for a run config")
    c.add_argument("--config", required=True)
    c.add_argument("--out")
    s.set_defaults(fn=cmd_alpha)

    s = sub.add_parser("bound", help="gradient-norm bounds")
    s.add_argument("--L", type=float, required=True)
    s.add_argument("--loss0", type=float, required=True)
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--batch", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--sigma", type=float)
    s.add_argument("--n-priv", type=int)
    s.add_argument("--mu", type=float)
    s.add_argument("--k", type=float, default=HEURISTIC_K)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_bound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ConfigError, ReportError, ValueError, OSError) as exc:
        print(f"dpc {args.cmd}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
