"""Run config files: flat ``key = value`` lines, ``#`` comments.

Example::

    seed = 0
    method = Coupling
    data.source = synth_classification
    data.n = 20000
    data.p = 20
    data.class_sep = 2
    model.kind = logistic
    split.r_pub = 0.05
    privacy.epsilon = 2
    privacy.delta = 1e-5
    train.eta = 0.01
    train.alpha = corollary
    train.batch = 200
    train.epochs = 5
    clip = automatic
    warmup_epochs = 0
    repeats = 10

``train.alpha`` is a number in [0, 1] or ``corollary``; ``train.schedule``
may instead name ``sample_ratio``, ``dpmd`` (with ``train.K``), ``only_pub``
or ``only_priv``. ``data.source`` may also be a CSV path.
"""

from __future__ import annotations

import configparser

from ..clipping import ClipRule
from ..models import ModelSpec
from ..optimizer import AlphaSchedule, CouplingConfig
from .datasets import SplitSpec
from .experiments import ExperimentConfig, PrivacySpec, SynthSource

KNOWN = {
    "seed", "method", "repeats", "clip", "warmup_epochs",
    "data.source", "data.n", "data.p", "data.class_sep", "data.noise_sd", "data.seed",
    "model.kind", "model.hidden", "model.activation", "model.l2",
    "split.r_pub", "split.seed", "split.test_fraction",
    "privacy.epsilon", "privacy.delta", "privacy.mu",
    "train.eta", "train.alpha", "train.schedule", "train.K", "train.batch", "train.epochs",
    "train.sigma", "train.R",
}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keep key case
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    kv = dict(cp["run"])
    unknown = sorted(set(kv) - KNOWN)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return kv


def _get(kv, key, cast, default=None, required=False):
    if key not in kv:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return cast(kv[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {kv[key]!r} ({exc})") from None


def _schedule(kv):
    name = kv.get("train.schedule")
    alpha = kv.get("train.alpha")
    if name in (None, "constant", "corollary"):
        if alpha is None or alpha == "corollary" or name == "corollary":
            return AlphaSchedule("corollary")
        return AlphaSchedule.constant(_get(kv, "train.alpha", float))
    if name in ("dpmd", "dpmd_cosine"):
        return AlphaSchedule.dpmd(_get(kv, "train.K", int))
    if name in ("sample_ratio", "only_pub", "only_priv"):
        return AlphaSchedule(name)
    raise ConfigError(f"unknown schedule {name!r}")


def experiment_from_dict(kv: dict) -> ExperimentConfig:
    src = kv.get("data.source", "synth_classification")
    dseed = _get(kv, "data.seed", int, 0)
    if src == "synth_classification":
        source = SynthSource("classification", _get(kv, "data.n", int, 2000), _get(kv, "data.p", int, 20),
                             _get(kv, "data.class_sep", float, 2.0), dseed)
    elif src == "synth_regression":
        source = SynthSource("regression", _get(kv, "data.n", int, 2000), _get(kv, "data.p", int, 20),
                             _get(kv, "data.noise_sd", float, 1.0), dseed)
    else:
        source = src
    if isinstance(source, SynthSource):
        p = source.p
    else:
        from ..data import read_csv
        p = read_csv(source).n_features
    hidden = tuple(int(h) for h in kv.get("model.hidden", "").split(",") if h.strip())
    try:
        model = ModelSpec(kv.get("model.kind", "logistic"), p, hidden, kv.get("model.activation", "tanh"),
                          _get(kv, "model.l2", float, 0.0))
        seed = _get(kv, "seed", int, 0)
        coupling = CouplingConfig(
            eta=_get(kv, "train.eta", float, 0.01),
            schedule=_schedule(kv),
            clip=ClipRule.parse(kv.get("clip", "automatic")),
            sigma=_get(kv, "train.sigma", float, 0.0),
            R=_get(kv, "train.R", float, 1.0),
            batch=_get(kv, "train.batch", int, 64),
            epochs=_get(kv, "train.epochs", int, 1),
            seed=seed,
            warmup_epochs=_get(kv, "warmup_epochs", int, 0),
        )
        return ExperimentConfig(
            source=source,
            split=SplitSpec(_get(kv, "split.r_pub", float, 0.05), _get(kv, "split.seed", int, seed)),
            model=model,
            privacy=PrivacySpec(_get(kv, "privacy.epsilon", float), _get(kv, "privacy.delta", float),
                                _get(kv, "privacy.mu", float)),
            coupling=coupling,
            repeats=_get(kv, "repeats", int, 1),
            method=kv.get("method", "Coupling"),
            test_fraction=_get(kv, "split.test_fraction", float, 0.2),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_from_dict(parse_config_text(fh.read()))
