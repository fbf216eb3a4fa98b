"""Acquisition scores and the UCB-to-EI switching policy.

Everything here works in maximization form; minimization objectives are
negated before they reach this module.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from . import gp
from ._backend import kernels
from .errors import InputError


class Mode(str, enum.Enum):
    UCB = "UCB"
    EI = "EI"


class ThresholdKind(str, enum.Enum):
    RELATIVE = "relative"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class AcqParams:
    xi: float = 0.01
    kappa: float = 2.0

    def __post_init__(self):
        for name in ("xi", "kappa"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be a finite non-negative number, got {v}")


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InputError(f"{name} must be finite, got {v}")


def ei_score(mean: float, std: float, f_best: float, xi: float = 0.01) -> float:
    """Expected improvement of ``Normal(mean, std**2)`` over ``f_best + xi``.

    With ``std == 0`` this is the limit ``max(0, mean - f_best - xi)``.
    """
    _check_finite(mean=mean, std=std, f_best=f_best, xi=xi)
    if std < 0:
        raise InputError(f"std must be non-negative, got {std}")
    imp = mean - f_best - xi
    if std == 0.0:
        return max(0.0, imp)
    z = imp / std
    value = imp * float(ndtr(z)) + std * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return max(0.0, value)


def ucb_score(mean: float, std: float, kappa: float = 2.0) -> float:
    _check_finite(mean=mean, std=std, kappa=kappa)
    if std < 0:
        raise InputError(f"std must be non-negative, got {std}")
    return mean + kappa * std


@dataclass(frozen=True)
class PolicyState:
    """Where the hybrid policy stands.

    ``baseline_sigma_bar`` is recorded by the first :func:`update_policy`
    call.  The switch to EI is one-way; ``switch_iteration`` is set exactly
    when ``mode`` is EI for a switching policy.  Fixed-mode states
    (``switching=False``) never move and never record a switch.
    """

    mode: Mode = Mode.UCB
    threshold_kind: ThresholdKind = ThresholdKind.RELATIVE
    threshold_value: float = 0.5
    baseline_sigma_bar: Optional[float] = None
    switch_iteration: Optional[int] = None
    switching: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "threshold_kind", ThresholdKind(self.threshold_kind))
        if not (math.isfinite(self.threshold_value) and self.threshold_value > 0):
            raise InputError(f"threshold_value must be positive, got {self.threshold_value}")

    @property
    def effective_threshold(self) -> Optional[float]:
        if self.threshold_kind is ThresholdKind.ABSOLUTE:
            return self.threshold_value
        if self.baseline_sigma_bar is None:
            return None
        return self.threshold_value * self.baseline_sigma_bar


def update_policy(state: PolicyState, sigma_bar: float, iteration: int) -> PolicyState:
    """Record the latest average uncertainty and switch to EI on a strict crossing."""
    if not (sigma_bar >= 0) or not math.isfinite(sigma_bar):
        raise InputError(f"sigma_bar must be finite and non-negative, got {sigma_bar}")
    if state.baseline_sigma_bar is None:
        state = replace(state, baseline_sigma_bar=float(sigma_bar))
    if not state.switching or state.mode is Mode.EI:
        return state
    if sigma_bar < state.effective_threshold:
        return replace(state, mode=Mode.EI, switch_iteration=int(iteration))
    return state


def scores_from_moments(means, stds, mode: Mode, params: AcqParams, f_best: float) -> np.ndarray:
    means = np.ascontiguousarray(means, dtype=float)
    stds = np.ascontiguousarray(stds, dtype=float)
    if mode is Mode.UCB:
        return means + params.kappa * stds
    return kernels.expected_improvement(means, stds, float(f_best), params.xi)


def score_candidates(model: gp.GpModel, pool, state: PolicyState, params: AcqParams,
                     f_best: float) -> np.ndarray:
    """One acquisition score per pool row under the state's current mode."""
    pool = np.asarray(pool, dtype=float)
    if pool.shape[0] == 0:
        raise InputError("candidate pool is empty")
    _check_finite(f_best=f_best)
    means, var = gp.predict(model, pool)
    return scores_from_moments(means, np.sqrt(var), state.mode, params, f_best)
