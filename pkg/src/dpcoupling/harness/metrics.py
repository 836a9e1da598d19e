"""Utility and signal-to-noise metrics."""

from __future__ import annotations

import math

import numpy as np


class DegenerateDenominatorError(ZeroDivisionError):
    pass


def delta_metric(acc_nonpriv: float, acc_onlypub: float, acc_fullpriv: float, acc_method: float) -> float:
    """(NonPriv - max(OnlyPub, FullPriv)) / (NonPriv - method).

    Values >= 1 mean the method is at least as accurate as both non-mixed
    baselines.
    """
    if not acc_method < acc_nonpriv:
        raise DegenerateDenominatorError(
            f"degenerate denominator: method accuracy {acc_method} is not below NonPriv {acc_nonpriv}")
    return (acc_nonpriv - max(acc_onlypub, acc_fullpriv)) / (acc_nonpriv - acc_method)


def snr(clipped_sum, noise) -> float:
    """||clipped_sum|| / ||noise||; infinite when there is no noise."""
    nn = float(np.linalg.norm(noise))
    if nn == 0:
        return math.inf
    return float(np.linalg.norm(clipped_sum)) / nn
