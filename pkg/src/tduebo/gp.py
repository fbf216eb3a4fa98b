"""Exact Gaussian-process regression.

The surrogate uses a constant prior mean and a stationary kernel
(Matérn-5/2 by default, squared-exponential optionally) with either one
shared length scale or one per input dimension.  Predictive variances are
those of the latent function; observation noise is only added on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from ._backend import MATERN52, SQEXP, kernels
from ._pykernels import jitter_cholesky
from .errors import (
    ConsistencyError,
    InputError,
    InvalidHyperparameterError,
    NumericalSingularityError,
)

KERNEL_KINDS = {"matern52": MATERN52, "sqexp": SQEXP}

#: Negative predictive variances smaller than this fraction of the signal
#: variance are rounding noise and are clamped to zero.
VARIANCE_TOLERANCE = 1e-8


def _kind_code(kind: str) -> int:
    try:
        return KERNEL_KINDS[kind]
    except KeyError:
        raise InputError(f"unknown kernel kind {kind!r}; expected one of {sorted(KERNEL_KINDS)}") from None


@dataclass(frozen=True)
class HyperParams:
    """Kernel and noise parameters.

    A single entry in ``length_scales`` means an isotropic kernel shared by
    all input dimensions.
    """

    length_scales: tuple
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise InvalidHyperparameterError("length_scales must be a non-empty sequence")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InvalidHyperparameterError(f"length scales must be positive, got {ls.tolist()}")
        if not (math.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise InvalidHyperparameterError(f"signal_variance must be positive, got {self.signal_variance}")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise InvalidHyperparameterError(f"noise_variance must be non-negative, got {self.noise_variance}")
        object.__setattr__(self, "length_scales", tuple(float(v) for v in ls))
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def isotropic(self) -> bool:
        return len(self.length_scales) == 1

    def scales_for(self, d: int) -> np.ndarray:
        """Length scales broadcast to ``d`` dimensions."""
        if self.isotropic:
            return np.full(d, self.length_scales[0])
        if len(self.length_scales) != d:
            raise InputError(f"{len(self.length_scales)} length scales given for {d}-dimensional inputs")
        return np.asarray(self.length_scales)


def kernel_eval(x, x_prime, hyper: HyperParams, kind: str = "matern52") -> float:
    """Covariance ``k(x, x')`` between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape or x.ndim != 1:
        raise InputError(f"point shapes differ: {x.shape} vs {x_prime.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_prime))):
        raise InputError("points must be finite")
    ls = hyper.scales_for(x.size)
    code = _kind_code(kind)
    r2 = sum(((a - b) / s) ** 2 for a, b, s in zip(x.tolist(), x_prime.tolist(), ls.tolist()))
    sv = hyper.signal_variance
    if code == MATERN52:
        s5r = math.sqrt(5.0 * r2)
        return sv * (1.0 + s5r + s5r * s5r / 3.0) * math.exp(-s5r)
    return sv * math.exp(-0.5 * r2)


def kernel_matrix(A, B, hyper: HyperParams, kind: str = "matern52") -> np.ndarray:
    """Covariance matrix between the rows of ``A`` and ``B``."""
    A = _as_inputs(A)
    B = _as_inputs(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    inv_ls = 1.0 / hyper.scales_for(A.shape[1])
    return kernels.kernel_matrix(A, B, inv_ls, hyper.signal_variance, _kind_code(kind))


def _as_inputs(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(X)


def _as_targets(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != n:
        raise InputError(f"{n} inputs but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise InputError("targets contain non-finite values")
    return np.ascontiguousarray(y)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GpModel:
    """A fitted GP surrogate.  Arrays are read-only; treat as immutable."""

    train_inputs: np.ndarray
    train_targets: np.ndarray
    hyper: HyperParams
    chol_factor: np.ndarray
    weights: np.ndarray
    mean_const: float
    kind: str = "matern52"
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]


def fit(X, y, hyper: HyperParams, mean_const: Optional[float] = None, kind: str = "matern52") -> GpModel:
    """Condition the GP on ``(X, y)``.

    ``mean_const`` defaults to the mean of ``y``.  Raises
    :class:`NumericalSingularityError` when ``K + noise*I`` cannot be
    factorized even with the maximum jitter.
    """
    X = _as_inputs(X)
    if X.shape[0] < 1:
        raise InputError("need at least one training point")
    y = _as_targets(y, X.shape[0])
    if mean_const is None:
        mean_const = float(y.mean())
    K = kernel_matrix(X, X, hyper, kind)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L, jitter = jitter_cholesky(K, hyper.signal_variance)
    if L is None:
        raise NumericalSingularityError(
            f"Cholesky factorization failed with jitter up to {jitter:.3g}", jitter=jitter
        )
    resid = y - mean_const
    w = solve_triangular(L.T, solve_triangular(L, resid, lower=True, check_finite=False),
                         lower=False, check_finite=False)
    return GpModel(
        train_inputs=_readonly(X.copy()),
        train_targets=_readonly(y.copy()),
        hyper=hyper,
        chol_factor=_readonly(L),
        weights=_readonly(w),
        mean_const=float(mean_const),
        kind=kind,
        jitter=jitter,
    )


def predict(model: GpModel, X_star, include_noise: bool = False):
    """Predictive means and variances at the rows of ``X_star``.

    Returns latent-function variances unless ``include_noise`` is set, in
    which case the noise variance is added to each.
    """
    Xs = _as_inputs(X_star, "X_star")
    if Xs.shape[1] != model.dim:
        raise InputError(f"model has {model.dim} input dimensions, X_star has {Xs.shape[1]}")
    Ks = kernel_matrix(Xs, model.train_inputs, model.hyper, model.kind)
    means = model.mean_const + Ks @ model.weights
    V = solve_triangular(model.chol_factor, Ks.T, lower=True, check_finite=False)
    var = model.hyper.signal_variance - np.einsum("ij,ij->j", V, V)
    tol = VARIANCE_TOLERANCE * model.hyper.signal_variance
    if var.size and var.min() < -tol:
        raise ConsistencyError(f"predictive variance {var.min():.3g} is negative beyond tolerance {tol:.3g}")
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + model.hyper.noise_variance
    return means, var


def predictive_std(model: GpModel, X_star) -> np.ndarray:
    _, var = predict(model, X_star)
    return np.sqrt(var)


def average_uncertainty(model: GpModel, X_star) -> float:
    """Mean predictive standard deviation over the rows of ``X_star``."""
    Xs = np.asarray(X_star, dtype=float)
    if Xs.size == 0 or Xs.shape[0] == 0:
        raise InputError("average_uncertainty needs at least one point")
    return float(np.mean(predictive_std(model, Xs)))


def log_marginal_likelihood(X, y, hyper: HyperParams, mean_const: Optional[float] = None,
                            kind: str = "matern52") -> float:
    X = _as_inputs(X)
    y = _as_targets(y, X.shape[0])
    if mean_const is None:
        mean_const = float(y.mean())
    value, jitter = kernels.log_marginal_likelihood(
        X, y - mean_const, 1.0 / hyper.scales_for(X.shape[1]),
        hyper.signal_variance, hyper.noise_variance, _kind_code(kind),
    )
    if value == -math.inf:
        raise NumericalSingularityError(
            f"Cholesky factorization failed with jitter up to {jitter:.3g}", jitter=jitter
        )
    return value


@dataclass(frozen=True)
class SearchConfig:
    """Multi-restart search over log hyperparameters.

    ``initial`` (if given) replaces the first start point, which otherwise
    sits at the geometric centre of the box.  Remaining starts are drawn
    uniformly in log space from ``seed``.
    """

    restarts: int = 5
    length_scale_bounds: tuple = (1e-2, 1e2)
    signal_variance_bounds: tuple = (1e-3, 1e1)
    noise_variance_bounds: tuple = (1e-6, 1e0)
    ard: bool = True
    kind: str = "matern52"
    seed: int = 0
    max_evals: int = 150
    initial: Optional[HyperParams] = None
    default: HyperParams = field(default_factory=lambda: HyperParams((0.5,), 1.0, 1e-2))


@dataclass(frozen=True)
class SearchResult:
    hyper: HyperParams
    lml: float
    fell_back: bool
    evaluations: int


def search_hyperparameters(X, y, config: SearchConfig = SearchConfig(),
                           mean_const: Optional[float] = None) -> SearchResult:
    """Maximize the log marginal likelihood; see :func:`optimize_hyperparameters`."""
    X = _as_inputs(X)
    y = _as_targets(y, X.shape[0])
    if X.shape[0] < 2:
        raise InputError("hyperparameter search needs at least two points")
    if config.restarts < 1:
        raise InputError("restarts must be >= 1")
    if mean_const is None:
        mean_const = float(y.mean())
    resid = np.ascontiguousarray(y - mean_const)
    d = X.shape[1]
    n_ls = d if config.ard else 1
    code = _kind_code(config.kind)
    bounds = np.log(np.array(
        [config.length_scale_bounds] * n_ls
        + [config.signal_variance_bounds, config.noise_variance_bounds],
        dtype=float,
    ))
    lo, hi = bounds[:, 0], bounds[:, 1]

    best = {"value": -math.inf, "theta": None}
    count = [0]

    def objective(theta):
        theta = np.clip(theta, lo, hi)
        p = np.exp(theta)
        ls = p[:n_ls] if config.ard else np.full(d, p[0])
        value, _ = kernels.log_marginal_likelihood(X, resid, 1.0 / ls, p[n_ls], p[n_ls + 1], code)
        count[0] += 1
        if value > best["value"]:
            best["value"] = value
            best["theta"] = theta.copy()
        return -value if math.isfinite(value) else 1e300

    rng = np.random.default_rng(config.seed)
    starts = rng.uniform(lo, hi, size=(config.restarts, lo.size))
    if config.initial is not None:
        starts[0] = np.clip(_hyper_to_theta(config.initial, n_ls, d), lo, hi)
    else:
        starts[0] = 0.5 * (lo + hi)

    step = 0.15 * (hi - lo)
    for x0 in starts:
        # scipy's default simplex is far too small for a log-space box
        simplex = np.tile(x0, (lo.size + 1, 1))
        for i in range(lo.size):
            simplex[i + 1, i] += step[i] if x0[i] + step[i] <= hi[i] else -step[i]
        minimize(objective, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                 options={"maxfev": config.max_evals, "xatol": 1e-3, "fatol": 1e-6,
                          "initial_simplex": simplex})

    if best["theta"] is None:
        return SearchResult(config.default, -math.inf, True, count[0])
    p = np.exp(best["theta"])
    hyper = HyperParams(tuple(p[:n_ls]), float(p[n_ls]), float(p[n_ls + 1]))
    return SearchResult(hyper, best["value"], False, count[0])


def _hyper_to_theta(hyper: HyperParams, n_ls: int, d: int) -> np.ndarray:
    ls = hyper.scales_for(d)
    ls = ls if n_ls == d else np.array([np.exp(np.mean(np.log(ls)))])
    return np.log(np.concatenate([ls, [hyper.signal_variance, hyper.noise_variance]]))


def optimize_hyperparameters(X, y, search_config: SearchConfig = SearchConfig()) -> HyperParams:
    """Hyperparameters with the best log marginal likelihood found.

    Derivative-free (Nelder-Mead) local search from ``restarts`` start points
    in log-parameter space.  If every evaluation fails numerically the
    configured default is returned; use :func:`search_hyperparameters` to
    see whether that happened.
    """
    return search_hyperparameters(X, y, search_config).hyper


def condition_on(model: GpModel, X_new, y_new: Sequence[float]) -> GpModel:
    """Refit with extra observations, keeping hyperparameters and prior mean."""
    X = np.vstack([model.train_inputs, _as_inputs(X_new)])
    y = np.concatenate([model.train_targets, np.atleast_1d(np.asarray(y_new, dtype=float))])
    return fit(X, y, model.hyper, model.mean_const, model.kind)
