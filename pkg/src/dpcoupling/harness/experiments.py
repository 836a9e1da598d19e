"""Method runs, repeats and (alpha, eta) sweeps.

Every run carves a fixed held-out test set (20% by default) before the
public/private split, so all methods are scored on the same rows. A run's
training seed is derived from (master seed, cell index, repeat index); the
public/private split depends only on (split seed, repeat index) so that all
cells of a sweep see the same data partition within one repeat.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import accountant
from ..alpha_solver import recommend_alpha
from ..clipping import ClipRule
from ..data import Dataset, read_csv
from ..models import ModelSpec, Problem
from ..optimizer import AlphaSchedule, CouplingConfig, DivergenceError, train
from ..rng import derive_seed
from .datasets import SplitSpec, holdout, split_dataset, synth_classification, synth_regression

METHODS = ("Coupling", "OnlyPub", "OnlyPriv", "FullPriv", "NonPriv", "AdaMix", "DPMD", "SampleMechanism")
MIXED = ("Coupling", "AdaMix", "DPMD", "SampleMechanism")

NOTES = {
    "AdaMix": "non-private threshold diagnostic",
    "DPMD": "accounting-invalid baseline",
    "SampleMechanism": "accounting-invalid baseline",
    "NonPriv": "no privacy",
}


@dataclass(frozen=True)
class SynthSource:
    kind: str  # classification | regression
    n: int
    p: int
    param: float  # class_sep or noise_sd
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ValueError(f"unknown synthetic task {self.kind!r}")

    def load(self) -> Dataset:
        if self.kind == "classification":
            return synth_classification(self.n, self.p, self.param, self.seed)
        return synth_regression(self.n, self.p, self.param, self.seed)


@lru_cache(maxsize=8)
def _load(source) -> Dataset:
    if isinstance(source, SynthSource):
        return source.load()
    return read_csv(source)


@dataclass(frozen=True)
class PrivacySpec:
    """Target budget; delta defaults to n_priv^-1.1 for the split at hand."""

    epsilon: float | None = None
    delta: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if self.epsilon is not None and self.mu is not None:
            raise ValueError("give epsilon or mu, not both")

    @property
    def private(self) -> bool:
        return self.epsilon is not None or self.mu is not None

    def resolve_delta(self, n_priv: int) -> float:
        return self.delta if self.delta is not None else accountant.delta_rule(n_priv)

    def budget(self, n_priv: int):
        """ApproxDpBudget, GdpLevel, or None when no privacy is requested."""
        if self.epsilon is not None:
            return accountant.ApproxDpBudget(self.epsilon, self.resolve_delta(n_priv))
        if self.mu is not None:
            return accountant.GdpLevel(self.mu)
        return None


@dataclass(frozen=True)
class ExperimentConfig:
    source: SynthSource | str
    split: SplitSpec
    model: ModelSpec
    privacy: PrivacySpec
    coupling: CouplingConfig
    repeats: int = 1
    method: str = "Coupling"
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")


@dataclass(frozen=True)
class MethodPlan:
    schedule: AlphaSchedule
    clip: ClipRule
    data: str  # split | full_private | full_public
    private: bool
    note: str = ""


def method_plan(method: str, base: AlphaSchedule | None = None, R: float = 1.0,
                clip: ClipRule | None = None) -> MethodPlan:
    """The (alpha, clipping, data) triple each method label stands for.

    Only Coupling takes its schedule and clipping rule from the run config
    (automatic clipping by default); every other label is fixed.
    """
    auto = ClipRule.automatic()
    if method == "Coupling":
        sched = base if base is not None else AlphaSchedule("corollary")
        if sched.kind not in ("constant", "corollary"):
            raise ValueError(f"Coupling takes a constant or corollary alpha, not {sched.kind!r}")
        return MethodPlan(sched, clip or auto, "split", True)
    if method == "OnlyPub":
        return MethodPlan(AlphaSchedule("only_pub"), auto, "split", False)
    if method == "OnlyPriv":
        return MethodPlan(AlphaSchedule("only_priv"), auto, "split", True)
    if method == "FullPriv":
        return MethodPlan(AlphaSchedule("only_priv"), auto, "full_private", True)
    if method == "NonPriv":
        return MethodPlan(AlphaSchedule("only_pub"), auto, "full_public", False, NOTES["NonPriv"])
    if method == "AdaMix":
        return MethodPlan(AlphaSchedule.constant(0.5), ClipRule.adaptive_quantile(0.9, R), "split", True, NOTES["AdaMix"])
    if method == "DPMD":
        K = base.K if base is not None and base.kind == "dpmd_cosine" else None
        return MethodPlan(AlphaSchedule.dpmd(K), ClipRule.identity(), "split", True, NOTES["DPMD"])
    if method == "SampleMechanism":
        return MethodPlan(AlphaSchedule("sample_ratio"), ClipRule.identity(), "split", True, NOTES["SampleMechanism"])
    raise ValueError(f"unknown method {method!r}")


@dataclass
class RunOutcome:
    test_acc: float
    test_loss: float
    alpha: float
    sigma: float
    epsilon: float
    delta: float
    steps: int
    rows: list


def build_problem(config: ExperimentConfig, repeat: int, data_mode: str) -> Problem:
    data = _load(config.source)
    train_set, test = holdout(data, config.test_fraction, config.split.seed)
    pub, priv = split_dataset(train_set, SplitSpec(config.split.r_pub, derive_seed(config.split.seed, repeat)))
    if data_mode == "full_private":
        return Problem(config.model, pub, train_set, test)
    if data_mode == "full_public":
        return Problem(config.model, train_set, train_set, test)
    return Problem(config.model, pub, priv, test)


def run_once(config: ExperimentConfig, repeat: int = 0, cell: int = 0) -> RunOutcome:
    c = config.coupling
    plan = method_plan(config.method, c.schedule, c.R, c.clip)
    problem = build_problem(config, repeat, plan.data)
    seed = derive_seed(c.seed, cell, repeat)
    n_priv = len(problem.private)
    B = c.batch
    T = (n_priv // B) * c.epochs
    budget = config.privacy.budget(n_priv) if plan.private else None
    delta = config.privacy.resolve_delta(n_priv) if n_priv >= 2 else c.delta
    if not plan.private:
        sigma = 0.0
    elif budget is None:
        sigma = c.sigma
    else:
        mu = budget.mu if isinstance(budget, accountant.GdpLevel) else accountant.mu_from_epsilon(budget).mu
        sigma = accountant.sigma_for_mu(n_priv, B, T, mu)
    sched = plan.schedule
    if sched.kind == "corollary" and sched.inputs is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = recommend_alpha(problem, budget, B, T, seed=seed)
        sched = AlphaSchedule.corollary(replace(rec.inputs, sigma=sigma))
    cfg = replace(c, schedule=sched, clip=plan.clip, sigma=sigma, seed=seed, delta=delta)
    res = train(problem, cfg)
    last = res.rows[-1]
    eps = math.inf if config.method == "NonPriv" else last.epsilon_spent
    if config.method == "NonPriv":
        for r in res.rows:
            r.epsilon_spent = math.inf
    return RunOutcome(last.test_acc, last.test_loss, last.alpha, sigma, eps, delta, res.total_steps, res.rows)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("DPC_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))  # results come back in input order


@dataclass
class MethodResult:
    method: str
    accs: list
    losses: list
    alpha: float
    sigma: float
    epsilon: float
    delta: float
    steps: int
    note: str = ""
    rows: list = field(default_factory=list, repr=False)

    @property
    def repeats(self) -> int:
        return len(self.accs)

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.accs))

    @property
    def sd_acc(self) -> float:
        return float(np.std(self.accs, ddof=1)) if len(self.accs) > 1 else 0.0

    @property
    def mean_test_loss(self) -> float:
        return float(np.mean(self.losses))

    @property
    def sd_test_loss(self) -> float:
        return float(np.std(self.losses, ddof=1)) if len(self.losses) > 1 else 0.0


def run_method(config: ExperimentConfig, cell: int = 0) -> MethodResult:
    """Run ``config.repeats`` independent repeats and aggregate by mean and sd."""
    outs = _pmap(lambda r: run_once(config, r, cell), range(config.repeats))
    first = outs[0]
    return MethodResult(config.method, [o.test_acc for o in outs], [o.test_loss for o in outs],
                        first.alpha, first.sigma, first.epsilon, first.delta, first.steps,
                        method_plan(config.method).note, first.rows)


def _num(v):
    if isinstance(v, int):
        return str(v)
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


AGGREGATE_HEADER = ["method", "repeats", "mean_acc", "sd_acc", "mean_test_loss", "sd_test_loss",
                    "alpha", "sigma", "epsilon_spent", "delta", "steps", "note"]


def write_aggregate_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for r in results:
            w.writerow([r.method, r.repeats, _num(r.mean_acc), _num(r.sd_acc), _num(r.mean_test_loss),
                        _num(r.sd_test_loss), _num(r.alpha), _num(r.sigma), _num(r.epsilon),
                        _num(r.delta), r.steps, r.note])


def compare_methods(config: ExperimentConfig, methods=METHODS):
    """run_method for each label, with the same cell index so seeds line up."""
    return [run_method(replace(config, method=m)) for m in methods]


@dataclass
class SweepCell:
    alpha: float
    eta: float
    mean_acc: float
    sd_acc: float
    mean_test_loss: float
    error: str = ""


@dataclass
class SweepResult:
    cells: list
    best: int | None

    @property
    def best_cell(self) -> SweepCell | None:
        return None if self.best is None else self.cells[self.best]


SWEEP_HEADER = ["alpha", "eta", "mean_acc", "sd_acc", "mean_test_loss", "best", "error"]


def argmax_cell(cells) -> int | None:
    """Index of the highest finite mean accuracy; ties go to the earliest cell.

    Regression sweeps have no accuracy and rank by lowest mean test loss.
    """
    if any(math.isfinite(c.mean_acc) for c in cells):
        score = [c.mean_acc for c in cells]
    else:
        score = [-c.mean_test_loss for c in cells]
    best = None
    for i, v in enumerate(score):
        if math.isfinite(v) and (best is None or v > score[best]):
            best = i
    return best


def sweep(base: ExperimentConfig, alphas, etas) -> SweepResult:
    """One constant-alpha Coupling run_method per (alpha, eta) cell.

    Cells are ordered alpha-major. A cell that fails (for example by
    diverging) is recorded with its error and does not stop the sweep.
    """
    alphas, etas = list(alphas), list(etas)
    if not alphas or not etas:
        raise ValueError("alpha and eta grids must be non-empty")
    grid = [(a, e) for a in alphas for e in etas]

    def cell(i):
        a, e = grid[i]
        cfg = replace(base, method="Coupling",
                      coupling=replace(base.coupling, eta=float(e), schedule=AlphaSchedule.constant(a)))
        try:
            repeats = [run_once(cfg, r, i) for r in range(cfg.repeats)]
        except (DivergenceError, FloatingPointError, ValueError) as exc:
            return SweepCell(float(a), float(e), math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
        accs = [o.test_acc for o in repeats]
        return SweepCell(float(a), float(e), float(np.mean(accs)),
                         float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
                         float(np.mean([o.test_loss for o in repeats])))

    cells = _pmap(cell, range(len(grid)))
    return SweepResult(cells, argmax_cell(cells))


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for i, c in enumerate(result.cells):
            w.writerow([_num(c.alpha), _num(c.eta), _num(c.mean_acc), _num(c.sd_acc),
                        _num(c.mean_test_loss), int(i == result.best), c.error])


def read_sweep_csv(path) -> SweepResult:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_HEADER:
            raise ValueError(f"{path}: not a sweep file")
        cells, best = [], None
        for i, rec in enumerate(reader):
            f = lambda k: float(rec[k]) if rec[k] != "" else math.nan
            cells.append(SweepCell(f("alpha"), f("eta"), f("mean_acc"), f("sd_acc"), f("mean_test_loss"), rec["error"]))
            if rec["best"] == "1":
                best = i
    return SweepResult(cells, best)


def read_aggregate_csv(path):
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != AGGREGATE_HEADER:
            raise ValueError(f"{path}: not an aggregate file")
        return list(reader)
