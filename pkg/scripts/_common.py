"""Shared setting for the desk-scale studies: logistic regression on two Gaussians."""

from dpcoupling.harness import experiments as ex
from dpcoupling.harness.datasets import SplitSpec
from dpcoupling.models import ModelSpec
from dpcoupling.optimizer import AlphaSchedule, CouplingConfig


def study_config(epsilon, method="Coupling", eta=0.01, seed=0, repeats=10, n=20_000, p=20, sep=2.0,
                 r_pub=0.05, batch=200, epochs=5):
    return ex.ExperimentConfig(
        source=ex.SynthSource("classification", n, p, sep, 0),
        split=SplitSpec(r_pub, seed),
        model=ModelSpec("logistic", p),
        privacy=ex.PrivacySpec(epsilon, 1e-5),
        coupling=CouplingConfig(eta=eta, schedule=AlphaSchedule("corollary"), batch=batch, epochs=epochs, seed=seed),
        repeats=repeats,
        method=method,
    )
