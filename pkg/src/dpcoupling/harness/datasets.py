"""Synthetic tasks and deterministic public/private splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..data import Dataset


@dataclass(frozen=True)
class SplitSpec:
    r_pub: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.r_pub < 1:
            raise ValueError(f"r_pub must lie in (0, 1), got {self.r_pub}")


class DegenerateSplitError(ValueError):
    pass


def split_dataset(dataset: Dataset, spec: SplitSpec):
    """Shuffle with the split seed; the first floor(r_pub * n) rows are public."""
    n = len(dataset)
    n_pub = math.floor(spec.r_pub * n)
    if n_pub < 1 or n - n_pub < 1:
        raise DegenerateSplitError(f"r_pub={spec.r_pub} on n={n} leaves an empty side ({n_pub}, {n - n_pub})")
    perm = rng.stream(spec.seed, rng.SPLIT).permutation(n)
    return (dataset.subset(perm[:n_pub], f"{dataset.name}/public"),
            dataset.subset(perm[n_pub:], f"{dataset.name}/private"))


def holdout(dataset: Dataset, fraction: float, seed: int):
    """(train, test) with round(fraction * n) shuffled rows held out."""
    n = len(dataset)
    n_test = int(round(fraction * n))
    if not 0 < n_test < n:
        raise DegenerateSplitError(f"test fraction {fraction} on n={n} leaves an empty side")
    perm = rng.stream(seed, rng.SPLIT, 1).permutation(n)
    return (dataset.subset(perm[n_test:], f"{dataset.name}/train"),
            dataset.subset(perm[:n_test], f"{dataset.name}/test"))


def synth_regression(n: int, p: int, noise_sd: float, seed: int) -> Dataset:
    """y = X w_true + noise with X standard normal; w_true is kept in meta."""
    if n < 1 or p < 1 or noise_sd < 0:
        raise ValueError("need n, p >= 1 and noise_sd >= 0")
    g = rng.stream(seed, rng.DATA)
    w = g.standard_normal(p)
    X = g.standard_normal((n, p))
    y = X @ w + noise_sd * g.standard_normal(n)
    return Dataset(X, y, "synth_regression", {"w_true": w.tolist(), "noise_sd": noise_sd, "seed": seed})


def synth_classification(n: int, p: int, class_sep: float, seed: int) -> Dataset:
    """Balanced two-Gaussian task with unit covariance and means +-(class_sep/2) u."""
    if n < 2 or p < 1 or class_sep < 0:
        raise ValueError("need n >= 2, p >= 1 and class_sep >= 0")
    g = rng.stream(seed, rng.DATA)
    u = g.standard_normal(p)
    u /= np.linalg.norm(u)
    labels = np.zeros(n)
    labels[g.permutation(n)[: n // 2]] = 1.0
    X = g.standard_normal((n, p)) + np.outer(2 * labels - 1, 0.5 * class_sep * u)
    return Dataset(X, labels, "synth_classification", {"u": u.tolist(), "class_sep": class_sep, "seed": seed})
