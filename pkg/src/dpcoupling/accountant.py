"""Conversions between (epsilon, delta), mu-GDP and the noise multiplier.

The mu <-> sigma map is the asymptotic central-limit form for DP-SGD with
sampling rate B/n over T iterations,

    mu = (B / n) * sqrt(T * (exp(1 / sigma^2) - 1)),

and mu-GDP is turned into (epsilon, delta) with

    epsilon = mu^2 + mu * sqrt(2 * log(1 / delta)).

Both are used as exact accountants for every T, not only in the limit.
Whether batches are Poisson-subsampled or shuffled is left open; the
formula is applied verbatim.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass


class InfiniteNoiseError(ValueError):
    """Raised when a zero privacy level would require an infinite noise multiplier."""


@dataclass(frozen=True)
class ApproxDpBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        _check_delta(self.delta)


@dataclass(frozen=True)
class GdpLevel:
    mu: float

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")


@dataclass(frozen=True)
class AccountingContext:
    n_priv: int
    batch: int
    iterations: int
    sigma: float

    def __post_init__(self):
        _check_shape(self.n_priv, self.batch, self.iterations)
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _check_shape(n_priv, batch, iterations):
    if n_priv < 1 or batch < 1 or iterations < 1:
        raise ValueError("n_priv, batch and iterations must be positive")
    if batch > n_priv:
        raise ValueError(f"batch ({batch}) exceeds n_priv ({n_priv})")


def mu_from_sigma(ctx: AccountingContext) -> GdpLevel:
    q = ctx.batch / ctx.n_priv
    return GdpLevel(q * math.sqrt(ctx.iterations * math.expm1(1.0 / ctx.sigma**2)))


def epsilon_from_mu(mu: GdpLevel, delta: float) -> ApproxDpBudget:
    _check_delta(delta)
    m = mu.mu
    return ApproxDpBudget(m * m + m * math.sqrt(2.0 * math.log(1.0 / delta)), delta)


def mu_from_epsilon(budget: ApproxDpBudget) -> GdpLevel:
    """Unique nonnegative root of mu^2 + c*mu = epsilon, c = sqrt(2 log(1/delta))."""
    c = math.sqrt(2.0 * math.log(1.0 / budget.delta))
    eps = budget.epsilon
    # (-c + sqrt(c^2 + 4 eps)) / 2 rewritten to avoid cancellation for small eps
    return GdpLevel(2.0 * eps / (c + math.sqrt(c * c + 4.0 * eps)))


def sigma_for_mu(n_priv: int, batch: int, iterations: int, mu: float) -> float:
    """Noise multiplier that spends exactly ``mu`` over ``iterations`` steps."""
    _check_shape(n_priv, batch, iterations)
    if mu == 0:
        raise InfiniteNoiseError("mu = 0 requires infinite noise")
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    a = (n_priv * mu) ** 2 / (iterations * batch**2)
    return math.sqrt(1.0 / math.log1p(a))


def sigma_approx(n_priv: int, batch: int, iterations: int, mu: float) -> float:
    """First-order form sigma^2 ~ B^2 T / (n^2 mu^2).

    Only accurate when n^2 mu^2 / (T B^2) is small, i.e. when the logarithm in
    :func:`sigma_for_mu` is evaluated near 1.
    """
    _check_shape(n_priv, batch, iterations)
    if mu == 0:
        raise InfiniteNoiseError("mu = 0 requires infinite noise")
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    return batch * math.sqrt(iterations) / (n_priv * mu)


def delta_rule(n_priv: int) -> float:
    """delta = n^-1.1, the dataset-size dependent choice."""
    if n_priv < 2:
        raise ValueError("n_priv must be >= 2")
    return float(n_priv) ** -1.1


def check_delta_for(delta: float, n_priv: int) -> None:
    """Warn when delta is not below 1/n_priv."""
    _check_delta(delta)
    if delta > 1.0 / n_priv:
        warnings.warn(
            f"delta={delta:g} exceeds 1/n_priv={1.0 / n_priv:g}; "
            f"consider delta_rule(n_priv)={delta_rule(max(n_priv, 2)):g}",
            stacklevel=2,
        )


def epsilon_spent(sigma: float, n_priv: int, batch: int, steps: int, delta: float) -> float:
    """(epsilon) consumed after ``steps`` private steps at noise ``sigma``.

    Zero steps spend nothing; sigma = 0 with at least one step is unbounded.
    """
    if steps == 0:
        return 0.0
    if sigma == 0:
        return math.inf
    mu = mu_from_sigma(AccountingContext(n_priv, batch, steps, sigma))
    return epsilon_from_mu(mu, delta).epsilon


@dataclass(frozen=True)
class PrivacyLevel:
    """All three views of one privacy setting."""

    n_priv: int
    batch: int
    iterations: int
    sigma: float
    mu: float
    epsilon: float
    delta: float

    @classmethod
    def from_sigma(cls, n_priv, batch, iterations, sigma, delta):
        mu = mu_from_sigma(AccountingContext(n_priv, batch, iterations, sigma)).mu
        eps = epsilon_from_mu(GdpLevel(mu), delta).epsilon
        return cls(n_priv, batch, iterations, sigma, mu, eps, delta)

    @classmethod
    def from_mu(cls, n_priv, batch, iterations, mu, delta):
        sigma = sigma_for_mu(n_priv, batch, iterations, mu)
        eps = epsilon_from_mu(GdpLevel(mu), delta).epsilon
        return cls(n_priv, batch, iterations, sigma, mu, eps, delta)

    @classmethod
    def from_epsilon(cls, n_priv, batch, iterations, epsilon, delta):
        mu = mu_from_epsilon(ApproxDpBudget(epsilon, delta)).mu
        sigma = sigma_for_mu(n_priv, batch, iterations, mu)
        return cls(n_priv, batch, iterations, sigma, mu, epsilon, delta)
