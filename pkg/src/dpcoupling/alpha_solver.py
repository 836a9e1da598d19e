"""Choosing the public-gradient weight alpha.

Two prescriptions are provided:

* the convex trade-off between an optimization term, linear in (1 - alpha)
  and shrinking with mu * n_priv, and a generalization term measuring the
  variance of the alpha-weighted empirical loss;
* the non-convex closed form alpha = 1 / (1 + B sqrt(2 L L0 / (B^2 + sigma^2 d))),
  the ratio of the public and private learning rates that make the
  convergence proof go through.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import accountant
from .models import Problem, batch_loss, estimate_smoothness, init_params


@dataclass(frozen=True)
class ConvexAlphaInputs:
    distance: float  # ||w_1 - w*||
    d: int
    d_vc: float
    mu: float
    n_pub: int
    n_priv: int
    variance: float  # Var_z[l(z)]

    def __post_init__(self):
        if self.distance < 0 or self.variance < 0:
            raise ValueError("distance and variance must be nonnegative")
        if self.d < 1 or not self.d_vc > 0 or not self.mu > 0:
            raise ValueError("d, d_vc and mu must be positive")
        if self.n_pub < 1 or self.n_priv < 1:
            raise ValueError("n_pub and n_priv must be positive")

    @property
    def opt_coef(self) -> float:
        return self.distance * math.sqrt(self.d) / (self.mu * self.n_priv)

    @property
    def gen_coef(self) -> float:
        return math.sqrt(self.variance) * math.sqrt(self.d_vc)


def convex_objective(inputs: ConvexAlphaInputs, alpha):
    """Optimization plus generalization error at ``alpha`` (scalar or array)."""
    a = np.asarray(alpha, dtype=np.float64)
    spread = np.sqrt((1 - a) ** 2 / inputs.n_priv + a**2 / inputs.n_pub)
    out = inputs.opt_coef * (1 - a) + spread * inputs.gen_coef
    return float(out) if out.ndim == 0 else out


def convex_objective_derivative(inputs: ConvexAlphaInputs, alpha: float) -> float:
    b1, b2 = 1.0 / inputs.n_priv, 1.0 / inputs.n_pub
    num = b2 * alpha - b1 * (1 - alpha)
    den = math.sqrt(b1 * (1 - alpha) ** 2 + b2 * alpha**2)
    return -inputs.opt_coef + inputs.gen_coef * num / den


def solve_convex_alpha(inputs: ConvexAlphaInputs, tol: float = 0.0) -> float:
    """Unique minimizer of :func:`convex_objective` on [0, 1].

    The objective is convex with a negative slope at 0, so the answer is 1
    when the slope at 1 is still nonpositive and otherwise the root of the
    derivative, found by bisection. Bisection is used instead of the
    closed-form quadratic because squaring the stationarity condition
    introduces a spurious root. The default ``tol`` of 0 bisects until the
    bracket stops shrinking in floating point.
    """
    A, C = inputs.opt_coef, inputs.gen_coef
    if C == 0:
        return 1.0
    if A == 0:
        return inputs.n_pub / (inputs.n_pub + inputs.n_priv)
    if convex_objective_derivative(inputs, 1.0) <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if convex_objective_derivative(inputs, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class NonConvexAlphaInputs:
    batch: int
    smoothness: float
    loss0: float
    sigma: float
    d: int

    def __post_init__(self):
        if self.batch < 1 or self.d < 1:
            raise ValueError("batch and d must be positive")
        if not self.smoothness > 0:
            raise ValueError("smoothness must be positive")
        if self.loss0 < 0 or self.sigma < 0:
            raise ValueError("loss0 and sigma must be nonnegative")


def corollary_alpha(inputs: NonConvexAlphaInputs) -> float:
    if inputs.loss0 == 0:
        return 1.0
    B = inputs.batch
    inner = B * math.sqrt(2 * inputs.smoothness * inputs.loss0 / (B * B + inputs.sigma**2 * inputs.d))
    return 1.0 / (1.0 + inner)


# directions stated for the closed form; d only moves alpha when sigma > 0
CLAIMED_DIRECTION = {
    "batch": "decreasing",
    "smoothness": "decreasing",
    "loss0": "decreasing",
    "sigma": "increasing",
    "d": "increasing",
}


@dataclass
class MonotonicityTable:
    axis: str
    values: list
    alphas: list
    claimed: str

    @property
    def observed(self) -> str:
        diffs = np.diff(self.alphas)
        if np.all(diffs > 0):
            return "increasing"
        if np.all(diffs < 0):
            return "decreasing"
        if np.all(diffs == 0):
            return "constant"
        return "mixed"

    @property
    def holds(self) -> bool:
        return self.observed == self.claimed

    def rows(self):
        return list(zip(self.values, self.alphas))


def corollary_alpha_monotonicity_table(base: NonConvexAlphaInputs, axis: str, grid) -> MonotonicityTable:
    if axis not in CLAIMED_DIRECTION:
        raise ValueError(f"unknown axis {axis!r}; choose from {sorted(CLAIMED_DIRECTION)}")
    grid = list(grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    cast = int if axis in ("batch", "d") else float
    alphas = [corollary_alpha(replace(base, **{axis: cast(v)})) for v in grid]
    return MonotonicityTable(axis, grid, alphas, CLAIMED_DIRECTION[axis])


@dataclass
class AlphaRecommendation:
    alpha: float
    smoothness: float
    loss0: float
    sigma: float
    d: int
    batch: int
    iterations: int
    n_priv: int
    mu: float | None
    notes: list = field(default_factory=list)

    @property
    def inputs(self) -> NonConvexAlphaInputs:
        return NonConvexAlphaInputs(self.batch, self.smoothness, self.loss0, self.sigma, self.d)

    def as_dict(self):
        return {
            "alpha": self.alpha, "smoothness": self.smoothness, "loss0": self.loss0,
            "sigma": self.sigma, "d": self.d, "batch": self.batch,
            "iterations": self.iterations, "n_priv": self.n_priv, "mu": self.mu,
            "notes": list(self.notes),
        }


def recommend_alpha(problem: Problem, budget, batch: int, iterations: int, seed: int = 0,
                    probes: int = 3, params=None) -> AlphaRecommendation:
    """Closed-form alpha for a concrete problem and privacy budget.

    ``budget`` is an :class:`ApproxDpBudget`, a :class:`GdpLevel`, or None
    for no privacy (sigma = 0). L and L0 are measured at the initial
    parameters on the public and private splits together.
    """
    n_priv = len(problem.private)
    notes = []
    if budget is None:
        mu, sigma = None, 0.0
        notes.append("sigma = 0: no privacy noise, training on public data alone may dominate")
    else:
        mu = budget.mu if isinstance(budget, accountant.GdpLevel) else accountant.mu_from_epsilon(budget).mu
        sigma = accountant.sigma_for_mu(n_priv, batch, iterations, mu)
    if params is None:
        params = init_params(problem.spec, seed)
    train = problem.train_union()
    L = estimate_smoothness(problem.spec, params, train, probes=probes, seed=seed)
    loss0, _ = batch_loss(problem.spec, params, train)
    inputs = NonConvexAlphaInputs(batch, L, loss0, sigma, problem.spec.dim)
    alpha = corollary_alpha(inputs)
    if sigma == 0:
        warnings.warn(notes[-1], stacklevel=2)
    return AlphaRecommendation(alpha, L, loss0, sigma, problem.spec.dim, batch, iterations, n_priv, mu, notes)
