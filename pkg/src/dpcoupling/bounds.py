"""Convergence bound calculators for coupled DP-SGD.

The central object is the functional

    F_r(g) = A_pub g^2 + A_priv (1/((r-1)g+1) - 1/((r+1)g+1)) (g - xi/r),
    A_pub = 1/(2L),  A_priv = sqrt(L0 / (2L (1 + sigma^2 d / B^2))),

whose inverse at y = (2 L0 + xi^2/(2BL)) / (c sqrt(T)) bounds the gradient
norm with probability 1 - c. Substituting r = k xi / g gives a single
increasing curve

    F_k(g) = A_pub g^2 + A_priv * 2 (1 - 1/k) g^2 / ((k xi + 1)^2 - g^2),

used with k = 1.5 (the default, near-maximizing choice) and k = 2 (the
choice behind the closed-form ``lemma1_approx``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from . import accountant

HEURISTIC_K = 1.5
LEMMA_K = 2.0


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    smoothness: float
    loss0: float
    xi: float
    batch: int
    d: int
    c: float
    iterations: int
    sigma: float | None = None
    n_priv: int | None = None
    mu: float | None = None

    def __post_init__(self):
        if not self.smoothness > 0 or not self.xi > 0:
            raise ValueError("smoothness and xi must be positive")
        if self.loss0 < 0:
            raise ValueError("loss0 must be nonnegative")
        if self.batch < 1 or self.d < 1 or self.iterations < 1:
            raise ValueError("batch, d and iterations must be positive")
        if not 0 < self.c <= 1:
            raise ValueError("c must lie in (0, 1]")
        has_sigma = self.sigma is not None
        has_mu = self.n_priv is not None or self.mu is not None
        if has_sigma == has_mu:
            raise ValueError("give exactly one of sigma or (n_priv, mu)")
        if has_sigma and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if has_mu and (self.n_priv is None or self.mu is None or self.mu < 0):
            raise ValueError("need both n_priv and mu >= 0")

    @property
    def noise_multiplier(self) -> float:
        if self.sigma is not None:
            return self.sigma
        return accountant.sigma_for_mu(self.n_priv, self.batch, self.iterations, self.mu)

    @property
    def noise_ratio(self) -> float:
        """sigma^2 d / B^2."""
        return self.noise_multiplier**2 * self.d / self.batch**2

    @property
    def a_pub(self) -> float:
        return 1.0 / (2.0 * self.smoothness)

    @property
    def a_priv(self) -> float:
        if self.mu == 0:
            return 0.0  # infinite noise: the private gradient carries nothing
        return math.sqrt(self.loss0 / (2.0 * self.smoothness * (1.0 + self.noise_ratio)))


def f_r(g_norm: float, r: float, inputs: BoundInputs) -> float:
    if not r > 1:
        raise ValueError(f"r must exceed 1, got {r}")
    if g_norm < 0:
        raise ValueError("g_norm must be nonnegative")
    g = g_norm
    bracket = 1.0 / ((r - 1) * g + 1) - 1.0 / ((r + 1) * g + 1)
    return inputs.a_pub * g * g + inputs.a_priv * bracket * (g - inputs.xi / r)


def pole(inputs: BoundInputs, k: float = HEURISTIC_K) -> float:
    return k * inputs.xi + 1.0


def f_r_heuristic(g_norm: float, inputs: BoundInputs, k: float = HEURISTIC_K) -> float:
    """F_r with r = k xi / g; defined on 0 <= g < k xi + 1."""
    p = pole(inputs, k)
    if not 0 <= g_norm < p:
        raise DomainError(f"g_norm={g_norm} outside [0, {p}) (pole at k*xi + 1 = {p})")
    g2 = g_norm * g_norm
    return inputs.a_pub * g2 + inputs.a_priv * 2.0 * (1.0 - 1.0 / k) * g2 / (p * p - g2)


def f_r_supremum(inputs: BoundInputs, k: float = HEURISTIC_K) -> float:
    if inputs.a_priv > 0:
        return math.inf
    return inputs.a_pub * pole(inputs, k) ** 2


def f_r_inverse(y: float, inputs: BoundInputs, k: float = HEURISTIC_K) -> float:
    """The g with f_r_heuristic(g) = y, by bisection to machine precision."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    sup = f_r_supremum(inputs, k)
    if y >= sup:
        raise DomainError(f"y={y} is not below the supremum {sup} of the curve")
    if y == 0:
        return 0.0
    lo, hi = 0.0, pole(inputs, k)
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f_r_heuristic(mid, inputs, k) < y:
            lo = mid
        else:
            hi = mid
    return lo if abs(f_r_heuristic(lo, inputs, k) - y) <= abs(_safe_eval(hi, inputs, k) - y) else hi


def _safe_eval(g, inputs, k):
    try:
        return f_r_heuristic(g, inputs, k)
    except DomainError:
        return math.inf


@dataclass(frozen=True)
class Threshold:
    y: float
    g_norm_bound: float


def threshold_level(inputs: BoundInputs) -> float:
    """y = (2 L0 + xi^2 / (2 B L)) / (c sqrt(T))."""
    L, B = inputs.smoothness, inputs.batch
    return (2 * inputs.loss0 + inputs.xi**2 / (2 * B * L)) / (inputs.c * math.sqrt(inputs.iterations))


def theorem2_threshold(inputs: BoundInputs, k: float = HEURISTIC_K) -> Threshold:
    y = threshold_level(inputs)
    return Threshold(y, f_r_inverse(y, inputs, k))


def lemma1_x(inputs: BoundInputs) -> float:
    """x = sqrt(L0 L n^2 mu^2 / (2 T d)) / (4 xi^2).

    With only sigma given, n^2 mu^2 / T is replaced by B^2 / sigma^2 (the
    same first-order approximation of the accountant).
    """
    L, L0, xi, d = inputs.smoothness, inputs.loss0, inputs.xi, inputs.d
    if inputs.mu is not None:
        inner = L0 * L * (inputs.n_priv * inputs.mu) ** 2 / (2 * inputs.iterations * d)
    else:
        inner = L0 * L * inputs.batch**2 / (2 * inputs.sigma**2 * d)
    return math.sqrt(inner) / (4 * xi * xi)


def _lemma_prefactor(inputs):
    c, T = inputs.c, inputs.iterations
    return math.sqrt(4 * inputs.loss0 * inputs.smoothness + inputs.xi**2 / inputs.batch) / (c**0.5 * T**0.25)


def lemma1_approx(inputs: BoundInputs) -> float:
    """Closed-form large-T approximation of the gradient-norm bound."""
    x = lemma1_x(inputs)
    if x >= 1:
        warnings.warn(f"x={x:.3g} >= 1: outside the approximation regime", stacklevel=2)
    return _lemma_prefactor(inputs) * (1 - x)


def onlypub_threshold(inputs: BoundInputs) -> float:
    """Bound on ||g||^2 when training on public data alone."""
    T = inputs.iterations
    return (2 * inputs.loss0 * inputs.smoothness + inputs.xi**2 / inputs.batch) / (inputs.c * math.sqrt(T))


def xi_dominant_comparison(inputs: BoundInputs):
    """(coupled, public-only) gradient-norm bounds keeping only the xi terms.

    Their ratio is exactly 1 - x.
    """
    base = inputs.xi / (inputs.batch**0.5 * inputs.c**0.5 * inputs.iterations**0.25)
    return base * (1 - lemma1_x(inputs)), base


@dataclass
class BoundRow:
    axis: str
    value: float
    y: float
    bound: float
    lemma1: float
    x: float
    onlypub_sq: float
    prefactor: float

    @classmethod
    def evaluate(cls, axis, value, inputs):
        th = theorem2_threshold(inputs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lem = lemma1_approx(inputs)
        return cls(axis, value, th.y, th.g_norm_bound, lem, lemma1_x(inputs),
                   onlypub_threshold(inputs), _lemma_prefactor(inputs))


GUIDELINES = {
    "iterations": "train longer with larger noise: bound falls as T grows at a fixed budget",
    "batch": "larger batch shrinks the xi^2/B term",
    "xi": "smaller gradient noise (e.g. after pretraining) shrinks the prefactor",
    "mu_n": "looser budget or more private data raises x and lowers the coupled bound only",
}


def regime_report(base: BoundInputs, iterations=(), batches=(), xis=(), mu_n=()):
    """Evaluate bounds along each grid and check the four tuning guidelines.

    ``base`` must use the (n_priv, mu) form so that sigma follows T and B.
    ``mu_n`` is a sequence of (mu, n_priv) pairs in increasing mu * n_priv.
    Returns (rows, verdicts) where verdicts maps guideline key to bool.
    """
    from dataclasses import replace

    if base.mu is None:
        raise ValueError("regime_report needs inputs given as (n_priv, mu)")
    rows, verdicts = [], {}

    def along(axis, items, decreasing_attr):
        sub = [BoundRow.evaluate(axis, v, inp) for v, inp in items]
        rows.extend(sub)
        vals = [getattr(r, decreasing_attr) for r in sub]
        return len(vals) > 1 and all(b < a for a, b in zip(vals, vals[1:]))

    if iterations:
        verdicts["iterations"] = along(
            "iterations", [(t, replace(base, iterations=int(t))) for t in iterations], "lemma1")
    if batches:
        verdicts["batch"] = along(
            "batch", [(b, replace(base, batch=int(b))) for b in batches], "prefactor")
    if xis:
        # decreasing xi should shrink the prefactor: walk the grid from large to small
        xs = sorted(xis, reverse=True)
        verdicts["xi"] = along("xi", [(x, replace(base, xi=float(x))) for x in xs], "prefactor")
    if mu_n:
        items = [(m * n, replace(base, mu=float(m), n_priv=int(n))) for m, n in mu_n]
        coupled = along("mu_n", items, "lemma1")
        pub = [onlypub_threshold(inp) for _, inp in items]
        verdicts["mu_n"] = coupled and len(set(pub)) == 1
    return rows, verdicts
