"""Coupled public/private SGD.

One step applies

    w <- w - eta * [alpha * sum_j g_j + (1 - alpha) * (sum_i C_i g_i + sigma R Z)]

with summed (not averaged) batch gradients, so eta scales like 1/B relative
to mean-reduction conventions. Z is drawn from a counter-based stream keyed
by (seed, step), which makes the noise at step t independent of batch
contents and of every other draw in the run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import accountant, rng
from .alpha_solver import NonConvexAlphaInputs, corollary_alpha
from .clipping import ClipRule, clip_batch
from .harness.metrics import snr as snr_ratio
from .models import Problem, batch_loss, full_gradient, init_params, per_sample_grads

SCHEDULES = ("constant", "sample_ratio", "dpmd_cosine", "corollary", "only_pub", "only_priv")


class DivergenceError(FloatingPointError):
    def __init__(self, step, eta, alpha):
        super().__init__(f"non-finite parameters after step t={step} (eta={eta:g}, alpha={alpha:g})")
        self.step, self.eta, self.alpha = step, eta, alpha


@dataclass(frozen=True)
class AlphaSchedule:
    kind: str
    value: float | None = None
    K: int | None = None
    inputs: NonConvexAlphaInputs | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.kind == "constant" and (self.value is None or not 0 <= self.value <= 1):
            raise ValueError("constant alpha must lie in [0, 1]")
        if self.kind == "dpmd_cosine" and self.K is not None and self.K < 1:
            raise ValueError("K must be a positive integer")

    @classmethod
    def constant(cls, alpha):
        return cls("constant", value=float(alpha))

    @classmethod
    def dpmd(cls, K=None):
        return cls("dpmd_cosine", K=K)

    @classmethod
    def corollary(cls, inputs):
        return cls("corollary", inputs=inputs)

    @property
    def uses_public(self) -> bool:
        return self.kind != "only_priv" and not (self.kind == "constant" and self.value == 0)

    @property
    def uses_private(self) -> bool:
        return self.kind != "only_pub" and not (self.kind == "constant" and self.value == 1)


@dataclass(frozen=True)
class AlphaContext:
    n_pub: int | None = None
    n_priv: int | None = None


def alpha_at(schedule: AlphaSchedule, t: int, T: int, context: AlphaContext | None = None) -> float:
    """Weight of the public gradient at step t of T (0 <= t <= T)."""
    if not 0 <= t <= T:
        raise ValueError(f"step {t} outside [0, {T}]")
    k = schedule.kind
    if k == "constant":
        return schedule.value
    if k == "only_pub":
        return 1.0
    if k == "only_priv":
        return 0.0
    if k == "sample_ratio":
        if context is None or context.n_pub is None or context.n_priv is None:
            raise ValueError("sample_ratio needs n_pub and n_priv")
        return context.n_pub / (context.n_pub + context.n_priv)
    if k == "dpmd_cosine":
        K = schedule.K if schedule.K is not None else max(T, 1)
        # past t = K the cosine form exceeds 1 and later turns back down; hold at 1
        if t >= K:
            return 1.0
        return min(max(1.0 - math.cos(math.pi * t / (2 * K)), 0.0), 1.0)
    if schedule.inputs is None:
        raise ValueError("corollary schedule needs NonConvexAlphaInputs")
    return corollary_alpha(schedule.inputs)


@dataclass(frozen=True)
class CouplingConfig:
    eta: float
    schedule: AlphaSchedule
    clip: ClipRule = field(default_factory=ClipRule.automatic)
    sigma: float = 0.0
    R: float = 1.0
    batch: int = 64
    epochs: int = 1
    seed: int = 0
    warmup_epochs: int = 0
    delta: float = 1e-5

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.batch < 1 or self.epochs < 1 or self.warmup_epochs < 0:
            raise ValueError("batch and epochs must be positive, warmup_epochs nonnegative")


@dataclass
class TrainState:
    params: np.ndarray
    step: int = 0
    epoch: int = 0
    seed: int = 0


@dataclass
class StepInfo:
    alpha: float
    signal: np.ndarray | None  # clipped private sum
    noise: np.ndarray | None
    threshold: float | None


def noise_draw(seed: int, step: int, d: int, sigma: float, R: float) -> np.ndarray:
    """sigma * R * N(0, I_d) from the (seed, step) counter position."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    z = rng.stream(seed, rng.NOISE, step).standard_normal(d)
    return (sigma * R) * z


def ordered_sum(G: np.ndarray) -> np.ndarray:
    """Row sum accumulated strictly in row order."""
    return np.cumsum(G, axis=0)[-1]


def coupled_step(state: TrainState, pub_grads, priv_grads, alpha: float, config: CouplingConfig):
    """One coupled update; either gradient set may be None (contributes zero).

    Returns (new_state, StepInfo). The noise for this step is drawn even
    when alpha = 1, so every schedule sees the same noise at step t.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    d = state.params.shape[0]
    pub = ordered_sum(pub_grads.grads) if pub_grads is not None else np.zeros(d)
    signal = noise = threshold = None
    if priv_grads is not None:
        clipped = clip_batch(priv_grads, config.clip, config.R)
        threshold = clipped.threshold
        signal = clipped.total
        noise = noise_draw(state.seed, state.step, d, config.sigma, threshold)
        priv = signal + noise
    else:
        priv = np.zeros(d)
    update = alpha * pub + (1.0 - alpha) * priv
    new = state.params - config.eta * update
    if not np.all(np.isfinite(new)):
        raise DivergenceError(state.step, config.eta, alpha)
    return TrainState(new, state.step + 1, state.epoch, state.seed), StepInfo(alpha, signal, noise, threshold)


@dataclass
class MetricsRow:
    epoch: int
    step: int
    alpha: float
    eta: float
    train_loss: float
    test_loss: float
    test_acc: float
    grad_norm: float
    snr: float
    sigma: float
    epsilon_spent: float


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_metrics_csv(rows, path) -> None:
    """RFC-4180 CSV; an infinite SNR (no noise) is written as an empty field."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            out = []
            for name in METRICS_HEADER:
                v = getattr(r, name)
                if name == "snr" and math.isinf(v):
                    out.append("")
                else:
                    out.append(_fmt(v))
            w.writerow(out)


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: not a metrics file")
        rows = []
        for rec in reader:
            kw = {}
            for name in METRICS_HEADER:
                s = rec[name]
                if name in ("epoch", "step"):
                    kw[name] = int(s)
                elif name == "snr" and s == "":
                    kw[name] = math.inf
                else:
                    kw[name] = float(s)
            rows.append(MetricsRow(**kw))
    return rows


class _PublicStream:
    """Public batches without replacement, reshuffling and cycling when exhausted."""

    def __init__(self, n, batch, seed, counter):
        if n < batch:
            raise ValueError(f"public split ({n}) smaller than the batch ({batch})")
        self.n, self.batch, self.seed = n, batch, seed
        self.cycle, self.pos, self.perm = -1, n, None
        self.counter = counter

    def next(self):
        if self.pos + self.batch > self.n:
            self.cycle += 1
            self.perm = rng.stream(self.seed, rng.PUBLIC_SHUFFLE, self.cycle).permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos:self.pos + self.batch]
        self.pos += self.batch
        self.counter["public"] += len(idx)
        return idx


@dataclass
class TrainResult:
    rows: list
    params: np.ndarray
    touched: dict
    total_steps: int


def train(problem: Problem, config: CouplingConfig, params=None) -> TrainResult:
    """Run warm-up then ``epochs`` coupled epochs; one metrics row per epoch.

    An epoch is n_priv // B steps. Each step draws a fresh public batch
    (cycling the public split) and the next private batch of the epoch's
    permutation. Schedules that never weight a stream skip computing its
    gradients entirely.
    """
    spec = problem.spec
    sched = config.schedule
    B = config.batch
    n_pub, n_priv = len(problem.public), len(problem.private)
    if n_priv < B:
        raise ValueError(f"private split ({n_priv}) smaller than the batch ({B})")
    if n_pub == 0 and (sched.uses_public or config.warmup_epochs):
        raise ValueError("empty public split")
    steps_per_epoch = n_priv // B
    T = steps_per_epoch * config.epochs
    ctx = AlphaContext(n_pub, n_priv)
    touched = {"public": 0, "private": 0}
    pub_stream = _PublicStream(n_pub, B, config.seed, touched) if (sched.uses_public or config.warmup_epochs) else None

    if params is None:
        params = init_params(spec, config.seed)
    state = TrainState(np.array(params, dtype=np.float64), 0, 0, config.seed)
    if not sched.uses_private:
        eval_set = problem.public
    elif not sched.uses_public:
        eval_set = problem.private
    else:
        eval_set = problem.train_union()
    rows = []

    def log(epoch, alpha, snrs, priv_steps, private_used):
        train_loss, _ = batch_loss(spec, state.params, eval_set)
        if problem.test is not None:
            test_loss, test_acc = batch_loss(spec, state.params, problem.test)
        else:
            test_loss = test_acc = math.nan
        gnorm = float(np.linalg.norm(full_gradient(spec, state.params, eval_set)))
        if private_used and config.sigma > 0 and snrs:
            snr = float(np.mean(snrs))
        else:
            snr = math.inf
        if private_used:
            eps = accountant.epsilon_spent(config.sigma, n_priv, B, priv_steps, config.delta)
        else:
            eps = 0.0
        rows.append(MetricsRow(epoch, state.step, alpha, config.eta, train_loss, test_loss,
                               test_acc, gnorm, snr, config.sigma, eps))

    # warm-up steps are public-only and do not advance the coupled step counter
    for w in range(config.warmup_epochs):
        for _ in range(n_pub // B):
            g = per_sample_grads(spec, state.params, problem.public, pub_stream.next())
            new = state.params - config.eta * ordered_sum(g.grads)
            if not np.all(np.isfinite(new)):
                raise DivergenceError(-1, config.eta, 1.0)
            state.params = new
        log(w + 1, 1.0, [], 0, False)

    alpha = alpha_at(sched, 0, T, ctx)
    for e in range(config.epochs):
        perm = rng.stream(config.seed, rng.PRIVATE_SHUFFLE, e).permutation(n_priv) if sched.uses_private else None
        snrs = []
        for s in range(steps_per_epoch):
            alpha = alpha_at(sched, state.step, T, ctx)
            pub = priv = None
            if sched.uses_public:
                pub = per_sample_grads(spec, state.params, problem.public, pub_stream.next())
            if sched.uses_private:
                idx = perm[s * B:(s + 1) * B]
                touched["private"] += len(idx)
                priv = per_sample_grads(spec, state.params, problem.private, idx)
            state, info = coupled_step(state, pub, priv, alpha, config)
            if info.noise is not None and config.sigma > 0:
                snrs.append(snr_ratio(info.signal, info.noise))
        state.epoch = e + 1
        log(config.warmup_epochs + e + 1, alpha, snrs, state.step, sched.uses_private)
    return TrainResult(rows, state.params, touched, T)
