"""Per-sample clipping rules and the clipped batch sum.

Rules are named in run configs as ``automatic``, ``flat:R``, ``identity``
or ``quantile:q``. Automatic clipping uses the factor 1/(||g|| + 1), i.e.
threshold R = 1 and stability constant 1. The quantile rule picks its
threshold from the raw batch norms, so it is a non-private diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import NonFiniteError, PerSampleGradients


@dataclass(frozen=True)
class ClipRule:
    kind: str
    threshold: float | None = None  # R for flat, fallback R0 for quantile
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("automatic", "flat", "identity", "adaptive_quantile"):
            raise ValueError(f"unknown clip rule {self.kind!r}")
        if self.kind == "flat" and not (self.threshold and self.threshold > 0):
            raise ValueError("flat clipping needs R > 0")
        if self.kind == "adaptive_quantile":
            if self.q is None or not 0 < self.q < 1:
                raise ValueError("quantile q must lie in (0, 1)")
            if self.threshold is not None and not self.threshold > 0:
                raise ValueError("fallback threshold must be positive")

    @classmethod
    def automatic(cls):
        return cls("automatic")

    @classmethod
    def flat(cls, R):
        return cls("flat", threshold=float(R))

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def adaptive_quantile(cls, q, fallback=1.0):
        return cls("adaptive_quantile", threshold=float(fallback), q=float(q))

    @classmethod
    def parse(cls, text: str) -> "ClipRule":
        name, _, arg = text.strip().partition(":")
        if name == "automatic" and not arg:
            return cls.automatic()
        if name == "identity" and not arg:
            return cls.identity()
        if name == "flat" and arg:
            return cls.flat(float(arg))
        if name == "quantile" and arg:
            return cls.adaptive_quantile(float(arg))
        raise ValueError(f"cannot parse clip rule {text!r}")

    def __str__(self):
        if self.kind == "flat":
            return f"flat:{self.threshold:g}"
        if self.kind == "adaptive_quantile":
            return f"quantile:{self.q:g}"
        return self.kind


def clip_factor(rule: ClipRule, norm: float, threshold: float = 1.0) -> float:
    """C(||g||) for one gradient.

    ``threshold`` is the flat threshold used by ``flat`` (when the rule has
    none) and by an already-resolved quantile rule.
    """
    if norm < 0:
        raise ValueError("norm must be nonnegative")
    if rule.kind == "automatic":
        return 1.0 / (norm + 1.0)
    if rule.kind == "identity":
        return 1.0
    R = rule.threshold if rule.kind == "flat" else threshold
    if norm == 0:
        return 1.0
    return min(R / norm, 1.0)


def quantile_threshold(norms, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*B)-th smallest norm (1-based)."""
    s = np.sort(np.asarray(norms, dtype=np.float64))
    if s.size == 0:
        raise ValueError("no norms given")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    rank = max(1, math.ceil(q * s.size))
    return float(s[rank - 1])


def _factors(rule, norms, threshold):
    if rule.kind == "automatic":
        return 1.0 / (norms + 1.0)
    if rule.kind == "identity":
        return np.ones_like(norms)
    with np.errstate(divide="ignore"):
        f = np.minimum(threshold / norms, 1.0)
    f[norms == 0] = 1.0
    return f


@dataclass
class ClippedBatch:
    total: np.ndarray
    factors: np.ndarray
    threshold: float


def clip_batch(grads: PerSampleGradients, rule: ClipRule, R: float = 1.0) -> ClippedBatch:
    """Sum of C_i * g_i over the batch rows, reduced in row order.

    ``threshold`` in the result is the sensitivity bound the noise should be
    scaled by: 1 for automatic, R for flat, the batch quantile for the
    adaptive rule and the caller's ``R`` for identity (which bounds nothing).
    """
    G = grads.grads
    norms = np.linalg.norm(G, axis=1)
    if rule.kind == "automatic":
        threshold = 1.0
    elif rule.kind == "flat":
        threshold = rule.threshold
    elif rule.kind == "adaptive_quantile":
        threshold = quantile_threshold(norms, rule.q)
        if threshold == 0:
            threshold = rule.threshold if rule.threshold is not None else R
    else:
        threshold = R
    f = _factors(rule, norms, threshold)
    scaled = G * f[:, None]
    # cumsum accumulates strictly in row order, unlike pairwise np.sum
    total = np.cumsum(scaled, axis=0)[-1]
    if not np.all(np.isfinite(total)):
        raise NonFiniteError("non-finite clipped sum")
    return ClippedBatch(total, f, float(threshold))
