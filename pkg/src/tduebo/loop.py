"""Pool-based sequential optimization campaigns.

Each iteration scores the remaining pool, moves the best candidate (and its
stored target) into the training set, refits the surrogate, measures the
average predictive standard deviation over the remaining pool and lets the
policy decide whether to switch from UCB to EI for the next selection.

Targets are handled in maximization form throughout; a ``minimize``
campaign negates them on the way in.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import gp
from .acquisition import (
    AcqParams,
    Mode,
    PolicyState,
    ThresholdKind,
    score_candidates,
    update_policy,
)
from .data import CampaignSplit
from .errors import ConfigurationError, NumericalSingularityError


class PolicyKind(str, enum.Enum):
    EI_ONLY = "ei"
    UCB_ONLY = "ucb"
    TDUE = "tdue"


@dataclass(frozen=True)
class CampaignConfig:
    """Settings for one campaign.

    ``ard=None`` picks one length scale per dimension when the inputs have
    more than one dimension.  ``monitor_points`` replaces the remaining pool
    as the set over which average uncertainty is measured.
    """

    budget: int
    objective: str = "maximize"
    acq_params: AcqParams = AcqParams()
    threshold_kind: ThresholdKind = ThresholdKind.RELATIVE
    threshold_value: float = 0.5
    policy_kind: PolicyKind = PolicyKind.TDUE
    refit_hyperparameters: bool = True
    seed: int = 0
    kernel: str = "matern52"
    ard: Optional[bool] = None
    search: gp.SearchConfig = gp.SearchConfig()
    fixed_hyper: Optional[gp.HyperParams] = None
    monitor_points: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigurationError(f"budget must be >= 1, got {self.budget}")
        if self.objective not in ("minimize", "maximize"):
            raise ConfigurationError(f"objective must be 'minimize' or 'maximize', got {self.objective!r}")
        object.__setattr__(self, "policy_kind", PolicyKind(self.policy_kind))
        object.__setattr__(self, "threshold_kind", ThresholdKind(self.threshold_kind))
        if not (math.isfinite(self.threshold_value) and self.threshold_value > 0):
            raise ConfigurationError(f"threshold_value must be positive, got {self.threshold_value}")

    @property
    def sign(self) -> float:
        return -1.0 if self.objective == "minimize" else 1.0


@dataclass(frozen=True)
class IterationEntry:
    iteration: int
    selected_pool_index: int
    selected_input: tuple
    observed_target: float  # maximization form
    sigma_bar: float
    mode: Mode  # mode that made this selection
    best_so_far: float  # maximization form


@dataclass(eq=False)
class RunRecord:
    policy: PolicyKind
    objective: str
    budget: int
    entries: List[IterationEntry] = field(default_factory=list)
    baseline_sigma_bar: Optional[float] = None
    switch_iteration: Optional[int] = None
    iterations_to_best: Optional[int] = None
    pool_optimum: Optional[float] = None
    initial_best: Optional[float] = None
    final_model_fingerprint: Optional[str] = None
    hyper_fallbacks: int = 0
    failed: bool = False
    failure: Optional[str] = None
    final_model: Optional[gp.GpModel] = field(default=None, repr=False)

    @property
    def sign(self) -> float:
        return -1.0 if self.objective == "minimize" else 1.0

    def best_trace(self) -> np.ndarray:
        return np.array([e.best_so_far for e in self.entries])

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "objective": self.objective,
            "budget": self.budget,
            "entries": [
                {
                    "iteration": e.iteration,
                    "selected_pool_index": e.selected_pool_index,
                    "selected_input": list(e.selected_input),
                    "observed_target": e.observed_target,
                    "sigma_bar": e.sigma_bar,
                    "mode": e.mode.value,
                    "best_so_far": e.best_so_far,
                }
                for e in self.entries
            ],
            "baseline_sigma_bar": self.baseline_sigma_bar,
            "switch_iteration": self.switch_iteration,
            "iterations_to_best": self.iterations_to_best,
            "pool_optimum": self.pool_optimum,
            "initial_best": self.initial_best,
            "final_model_fingerprint": self.final_model_fingerprint,
            "hyper_fallbacks": self.hyper_fallbacks,
            "failed": self.failed,
            "failure": self.failure,
        }


def _iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, iteration]).generate_state(1)[0])


def _fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    return h.hexdigest()[:16]


class _Refitter:
    """Hyperparameter search + fit with the campaign's settings."""

    def __init__(self, config: CampaignConfig, dim: int):
        self.config = config
        ard = config.ard if config.ard is not None else dim > 1
        self.search = replace(config.search, ard=ard, kind=config.kernel)
        self.hyper = config.fixed_hyper
        self.fallbacks = 0

    def __call__(self, X, y, iteration: int) -> gp.GpModel:
        search_now = self.config.fixed_hyper is None and (
            self.hyper is None or self.config.refit_hyperparameters
        )
        if search_now:
            if X.shape[0] >= 2:
                cfg = replace(self.search, seed=_iteration_seed(self.config.seed, iteration),
                              initial=self.hyper)
                result = gp.search_hyperparameters(X, y, cfg)
                self.fallbacks += int(result.fell_back)
                self.hyper = result.hyper
            else:
                self.hyper = self.search.default
        return gp.fit(X, y, self.hyper, kind=self.config.kernel)


def _initial_state(config: CampaignConfig) -> PolicyState:
    kind = config.policy_kind
    return PolicyState(
        mode=Mode.EI if kind is PolicyKind.EI_ONLY else Mode.UCB,
        threshold_kind=config.threshold_kind,
        threshold_value=config.threshold_value,
        switching=kind is PolicyKind.TDUE,
    )


def _check(split: CampaignSplit, config: CampaignConfig):
    if split.initial.X.shape[0] < 1:
        raise ConfigurationError("the initial set is empty")
    if config.budget > split.pool.X.shape[0]:
        raise ConfigurationError(
            f"budget {config.budget} exceeds the candidate pool size {split.pool.X.shape[0]}"
        )


def _monitor_set(config, pool_X, remaining):
    if config.monitor_points is not None:
        return config.monitor_points
    return pool_X[remaining] if remaining else pool_X


def initialize(split: CampaignSplit, config: CampaignConfig):
    """Fit the surrogate on the initial set and set up the policy state.

    Returns ``(model, state)``; the state already holds the baseline
    average uncertainty over the whole candidate pool.
    """
    _check(split, config)
    model = _Refitter(config, split.initial.X.shape[1])(
        split.initial.X, config.sign * split.initial.y, 0)
    state = _initial_state(config)
    sigma0 = gp.average_uncertainty(model, _monitor_set(config, split.pool.X, list(range(len(split.pool.X)))))
    return model, update_policy(state, sigma0, 0)


def select_next(model: gp.GpModel, pool, state: PolicyState, params: AcqParams, f_best: float) -> int:
    """Index of the highest-scoring pool row; ties go to the lowest index."""
    scores = score_candidates(model, pool, state, params, f_best)
    return int(np.argmax(scores))


def run_campaign(split: CampaignSplit, config: CampaignConfig,
                 on_iteration: Optional[Callable] = None) -> RunRecord:
    """Run ``config.budget`` selections against the split's candidate pool.

    ``on_iteration(iteration, model, state)`` is called after the initial
    fit (iteration 0) and after every refit.  A numerical failure stops the
    run and returns the partial record with ``failed`` set.
    """
    _check(split, config)
    sign = config.sign
    pool_X = split.pool.X
    pool_y = sign * split.pool.y
    X = np.array(split.initial.X, dtype=float)
    y = sign * np.array(split.initial.y, dtype=float)
    record = RunRecord(policy=config.policy_kind, objective=config.objective, budget=config.budget,
                       pool_optimum=float(pool_y.max()), initial_best=float(y.max()))
    refit = _Refitter(config, X.shape[1])
    remaining = list(range(pool_X.shape[0]))
    try:
        model = refit(X, y, 0)
        state = _initial_state(config)
        state = update_policy(state, gp.average_uncertainty(model, _monitor_set(config, pool_X, remaining)), 0)
    except NumericalSingularityError as exc:
        record.failed, record.failure = True, f"initial fit: {exc}"
        return record
    record.baseline_sigma_bar = state.baseline_sigma_bar
    if on_iteration is not None:
        on_iteration(0, model, state)

    f_best = float(y.max())
    for t in range(1, config.budget + 1):
        mode = state.mode
        j = select_next(model, pool_X[remaining], state, config.acq_params, f_best)
        idx = remaining.pop(j)
        obs = float(pool_y[idx])
        X = np.vstack([X, pool_X[idx:idx + 1]])
        y = np.append(y, obs)
        f_best = max(f_best, obs)
        try:
            model = refit(X, y, t)
            sigma_bar = gp.average_uncertainty(model, _monitor_set(config, pool_X, remaining))
        except NumericalSingularityError as exc:
            record.failed, record.failure = True, f"iteration {t}: {exc}"
            record.entries.append(IterationEntry(t, idx, tuple(pool_X[idx].tolist()), obs,
                                                 math.nan, mode, f_best))
            break
        state = update_policy(state, sigma_bar, t)
        record.entries.append(IterationEntry(
            iteration=t, selected_pool_index=idx, selected_input=tuple(pool_X[idx].tolist()),
            observed_target=obs, sigma_bar=sigma_bar, mode=mode, best_so_far=f_best,
        ))
        if record.iterations_to_best is None and obs == record.pool_optimum:
            record.iterations_to_best = t
        if on_iteration is not None:
            on_iteration(t, model, state)

    record.switch_iteration = state.switch_iteration
    record.hyper_fallbacks = refit.fallbacks
    record.final_model_fingerprint = _fingerprint(X, y)
    if not record.failed:
        record.final_model = model
    return record
