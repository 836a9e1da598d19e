"""Small differentiable models with exact per-sample gradients.

Three kinds are supported, all sharing a flat parameter vector:

* ``least_squares``: l = 0.5 * (w.x - y)^2
* ``logistic``: binary cross-entropy on z = w.x, labels in {0, 1}
* ``mlp``: fully connected tanh/relu network with biases and a scalar
  logistic output

Every kind adds ``0.5 * l2 * ||w||^2`` to each per-sample loss. Gradients
are derived by hand; there is no autodiff dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .data import Dataset

KINDS = ("least_squares", "logistic", "mlp")
ACTIVATIONS = ("tanh", "relu")

_CHUNK = 4096


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    n_features: int
    hidden: tuple = ()
    activation: str = "tanh"
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.n_features < 1:
            raise ValueError("n_features must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind == "mlp" and not self.hidden:
            raise ValueError("mlp needs at least one hidden layer")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")

    @property
    def layer_sizes(self):
        if self.kind != "mlp":
            return (self.n_features, 1)
        return (self.n_features, *self.hidden, 1)

    @property
    def dim(self) -> int:
        if self.kind != "mlp":
            return self.n_features
        s = self.layer_sizes
        return sum(o * i + o for i, o in zip(s[:-1], s[1:]))

    @property
    def is_classifier(self) -> bool:
        return self.kind != "least_squares"


@dataclass
class PerSampleGradients:
    grads: np.ndarray
    losses: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if self.grads.ndim != 2 or self.grads.shape[0] < 1:
            raise ValueError("need at least one gradient row")
        if not np.all(np.isfinite(self.grads)):
            raise NonFiniteError("non-finite per-sample gradient")

    @property
    def batch(self) -> int:
        return self.grads.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.grads, axis=1)


@dataclass
class ProblemConstants:
    smoothness: float
    initial_loss: float
    grad_noise: float
    optimum_distance: float | None = None
    loss_variance: float | None = None
    vc_dim: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.smoothness > 0:
            raise ValueError("smoothness must be positive")
        for name in ("initial_loss", "grad_noise", "optimum_distance", "loss_variance"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.vc_dim is not None and not self.vc_dim > 0:
            raise ValueError("vc_dim must be positive")


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], layer by layer."""
    g = rng.stream(seed, rng.INIT)
    if spec.kind != "mlp":
        b = 1.0 / math.sqrt(spec.n_features)
        return g.uniform(-b, b, size=spec.n_features)
    parts = []
    s = spec.layer_sizes
    for fan_in, fan_out in zip(s[:-1], s[1:]):
        b = 1.0 / math.sqrt(fan_in)
        parts.append(g.uniform(-b, b, size=fan_out * fan_in + fan_out))
    return np.concatenate(parts)


def _unpack(spec, params):
    s = spec.layer_sizes
    out, k = [], 0
    for fan_in, fan_out in zip(s[:-1], s[1:]):
        W = params[k:k + fan_out * fan_in].reshape(fan_out, fan_in)
        k += fan_out * fan_in
        b = params[k:k + fan_out]
        k += fan_out
        out.append((W, b))
    return out


def _act(spec, z):
    if spec.activation == "tanh":
        a = np.tanh(z)
        return a, 1.0 - a * a
    return np.maximum(z, 0.0), (z > 0).astype(z.dtype)


def _check_params(spec, params):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.dim,):
        raise ValueError(f"params have shape {params.shape}, model needs ({spec.dim},)")
    return params


def _bce(z, y):
    return np.logaddexp(0.0, z) - y * z


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(spec, params, X):
    """Output scores; for mlp also the cached activations and derivatives."""
    if spec.kind != "mlp":
        return X @ params, None
    layers = _unpack(spec, params)
    a = X
    cache = []
    for W, b in layers[:-1]:
        z = a @ W.T + b
        h, dh = _act(spec, z)
        cache.append((a, dh))
        a = h
    W, b = layers[-1]
    cache.append((a, None))
    return (a @ W.T + b)[:, 0], cache


def _losses_from_scores(spec, z, y, params):
    if spec.kind == "least_squares":
        loss = 0.5 * (z - y) ** 2
    else:
        loss = _bce(z, y)
    if spec.l2:
        loss = loss + 0.5 * spec.l2 * float(params @ params)
    return loss


def per_sample_losses(spec: ModelSpec, params, X, y) -> np.ndarray:
    params = _check_params(spec, params)
    z, _ = _forward(spec, params, X)
    return _losses_from_scores(spec, z, y, params)


def _grad_rows(spec, params, X, y):
    z, cache = _forward(spec, params, X)
    losses = _losses_from_scores(spec, z, y, params)
    if spec.kind == "least_squares":
        G = (z - y)[:, None] * X
    elif spec.kind == "logistic":
        G = (_sigmoid(z) - y)[:, None] * X
    else:
        layers = _unpack(spec, params)
        delta = (_sigmoid(z) - y)[:, None]  # (B, 1)
        pieces = []
        for li in range(len(layers) - 1, -1, -1):
            a_prev, _ = cache[li]
            W, _ = layers[li]
            gW = delta[:, :, None] * a_prev[:, None, :]
            pieces.append(np.concatenate([gW.reshape(len(X), -1), delta], axis=1))
            if li > 0:
                _, dh = cache[li - 1]
                delta = (delta @ W) * dh
        G = np.concatenate(pieces[::-1], axis=1)
    if spec.l2:
        G = G + spec.l2 * params
    return G, losses


def per_sample_grads(spec: ModelSpec, params, dataset: Dataset, batch_indices) -> PerSampleGradients:
    params = _check_params(spec, params)
    if dataset.n_features != spec.n_features:
        raise ValueError(f"dataset has {dataset.n_features} features, model expects {spec.n_features}")
    idx = np.asarray(batch_indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(dataset)):
        raise IndexError("batch index out of range")
    G, losses = _grad_rows(spec, params, dataset.features[idx], dataset.labels[idx])
    if not np.all(np.isfinite(losses)):
        raise NonFiniteError("non-finite per-sample loss")
    return PerSampleGradients(G, losses, idx)


def full_gradient(spec: ModelSpec, params, dataset: Dataset) -> np.ndarray:
    """Gradient of the mean loss over the whole dataset."""
    params = _check_params(spec, params)
    total = np.zeros(spec.dim)
    for start in range(0, len(dataset), _CHUNK):
        sl = slice(start, start + _CHUNK)
        G, _ = _grad_rows(spec, params, dataset.features[sl], dataset.labels[sl])
        total += G.sum(axis=0)
    return total / len(dataset)


def predict_scores(spec: ModelSpec, params, X) -> np.ndarray:
    z, _ = _forward(spec, _check_params(spec, params), X)
    return z


def batch_loss(spec: ModelSpec, params, dataset: Dataset, indices=None):
    """Mean loss and accuracy over ``indices`` (all rows when None).

    Classifiers threshold the predicted probability at 0.5. Least squares
    reports accuracy only when labels are binary (prediction thresholded at
    0.5); otherwise accuracy is nan.
    """
    if indices is None:
        X, y = dataset.features, dataset.labels
    else:
        idx = np.asarray(indices, dtype=np.int64)
        X, y = dataset.features[idx], dataset.labels[idx]
    if len(y) == 0:
        raise ValueError("empty batch")
    params = _check_params(spec, params)
    z, _ = _forward(spec, params, X)
    loss = float(np.mean(_losses_from_scores(spec, z, y, params)))
    if spec.is_classifier:
        acc = float(np.mean((z > 0) == (y > 0.5)))
    elif np.all((y == 0) | (y == 1)):
        acc = float(np.mean((z > 0.5) == (y > 0.5)))
    else:
        acc = math.nan
    return loss, acc


def estimate_smoothness(spec: ModelSpec, params, dataset: Dataset, probes: int = 3, seed: int = 0,
                        iters: int = 100, step: float = 1e-4, tol: float = 1e-7) -> float:
    """Largest Hessian eigenvalue of the mean loss by power iteration.

    Hessian-vector products are central gradient differences with step
    ``step``. Each probe starts from its own random unit direction; the
    largest absolute Rayleigh quotient over probes is returned.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    params = _check_params(spec, params)

    def hvp(v):
        gp = full_gradient(spec, params + step * v, dataset)
        gm = full_gradient(spec, params - step * v, dataset)
        return (gp - gm) / (2 * step)

    best = 0.0
    for p in range(probes):
        v = rng.stream(seed, rng.PROBE, p).standard_normal(spec.dim)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            hv = hvp(v)
            if not np.all(np.isfinite(hv)):
                raise NonFiniteError("non-finite Hessian-vector product")
            new_lam = float(v @ hv)
            nrm = np.linalg.norm(hv)
            if nrm == 0:
                lam = 0.0
                break
            v = hv / nrm
            converged = abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-12)
            lam = new_lam
            if converged:
                break
        best = max(best, abs(lam))
    return best


def estimate_grad_noise(spec: ModelSpec, params, dataset: Dataset, sample_count: int, seed: int = 0) -> float:
    """Root-mean-square deviation of per-sample gradients from the full gradient.

    Samples ``sample_count`` rows without replacement (all rows when the
    count reaches the dataset size).
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    gbar = full_gradient(spec, params, dataset)
    n = len(dataset)
    if sample_count >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(rng.stream(seed, rng.PROBE, 1 << 20).choice(n, size=sample_count, replace=False))
    sq = 0.0
    for start in range(0, len(idx), _CHUNK):
        G = per_sample_grads(spec, params, dataset, idx[start:start + _CHUNK]).grads
        sq += float(np.sum((G - gbar) ** 2))
    return math.sqrt(sq / len(idx))


def loss_variance(spec: ModelSpec, params, dataset: Dataset) -> float:
    losses = per_sample_losses(spec, params, dataset.features, dataset.labels)
    return float(np.var(losses))


class SingularSystemError(np.linalg.LinAlgError):
    pass


def least_squares_optimum(dataset: Dataset, l2: float = 0.0) -> np.ndarray:
    """Minimizer of the mean of 0.5*(w.x-y)^2 + 0.5*l2*||w||^2."""
    X, y = dataset.features, dataset.labels
    n, p = X.shape
    A = X.T @ X / n + l2 * np.eye(p)
    if np.linalg.cond(A) > 1e12:
        raise SingularSystemError("normal equations are singular or ill-conditioned")
    return np.linalg.solve(A, X.T @ y / n)


def problem_constants(spec: ModelSpec, params, dataset: Dataset, *, probes=3, noise_samples=1000,
                      seed=0, vc_dim=None) -> ProblemConstants:
    """Gather L, L0, xi (and for least squares ||w1-w*||, Var[l]) at ``params``."""
    L = estimate_smoothness(spec, params, dataset, probes=probes, seed=seed)
    loss0, _ = batch_loss(spec, params, dataset)
    xi = estimate_grad_noise(spec, params, dataset, min(noise_samples, len(dataset)), seed=seed)
    dist = var = None
    if spec.kind == "least_squares":
        w_star = least_squares_optimum(dataset, spec.l2)
        dist = float(np.linalg.norm(params - w_star))
        var = loss_variance(spec, w_star, dataset)
    if vc_dim is None:
        if spec.kind == "mlp":
            raise ValueError("vc_dim must be given for mlp models")
        vc_dim = spec.dim + 1
    return ProblemConstants(L, loss0, xi, dist, var, float(vc_dim))


@dataclass
class Problem:
    """A model together with its public, private and held-out test data."""

    spec: ModelSpec
    public: Dataset
    private: Dataset
    test: Dataset | None = None

    def __post_init__(self):
        for part in (self.public, self.private, self.test):
            if part is not None and part.n_features != self.spec.n_features:
                raise ValueError("dataset feature count does not match the model")

    def train_union(self) -> Dataset:
        return Dataset.concat([self.public, self.private], name="train")
