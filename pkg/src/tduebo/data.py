"""Dataset ingestion, normalization and campaign splits.

A campaign split partitions one dataset into an initial-fit set, a
candidate pool that the loop draws from, and a held-out test set.  Feature
scaling and target standardization are fitted on initial + pool rows only
and then applied to the test rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, IngestionError, InputError

X_RANGE_1D = (-1.0, 2.0)
INITIAL_1D = (-0.9, 1.1)


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    features: np.ndarray
    target: np.ndarray
    feature_names: List[str]
    target_name: str

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.target, dtype=float).ravel()
        if X.ndim != 2:
            raise InputError(f"features must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if X.shape[0] < 3 or X.shape[1] < 1:
            raise InputError(f"dataset needs n >= 3 and d >= 1, got n={X.shape[0]}, d={X.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        if len(self.feature_names) != X.shape[1]:
            raise InputError("feature_names does not match the number of feature columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", list(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Protocol:
    """Split sizes for one dataset.

    With ``test_size`` given the three sizes must add up to the dataset
    size exactly.  ``derive=True`` ignores ``pool_size``/``test_size`` and
    recomputes them from ``test_fraction`` and the actual row count.
    """

    n_initial: int
    pool_size: Optional[int]
    budget: int
    test_size: Optional[int] = None
    test_fraction: float = 0.25
    derive: bool = False

    def resolve(self, n: int) -> tuple:
        """``(n_initial, pool_size, test_size)`` for a dataset of ``n`` rows."""
        if self.n_initial < 1:
            raise ConfigurationError("n_initial must be at least 1")
        if self.derive:
            if not 0 <= self.test_fraction < 1:
                raise ConfigurationError(f"test_fraction must be in [0, 1), got {self.test_fraction}")
            test = int(round(self.test_fraction * n))
            pool = n - test - self.n_initial
        else:
            if self.pool_size is None:
                raise ConfigurationError("pool_size is required unless derive is set")
            pool = self.pool_size
            test = n - self.n_initial - pool if self.test_size is None else self.test_size
            total = self.n_initial + pool + test
            if total != n or test < 0:
                raise ConfigurationError(
                    f"protocol sizes {self.n_initial} initial + {pool} pool + {test} test = {total} "
                    f"do not match the {n} rows in the dataset"
                )
        if pool < 1:
            raise ConfigurationError(f"derived pool size {pool} is not positive")
        if not 1 <= self.budget <= pool:
            raise ConfigurationError(f"budget {self.budget} must be between 1 and the pool size {pool}")
        return self.n_initial, pool, test

    @classmethod
    def from_dict(cls, d: dict) -> "Protocol":
        known = {"n_initial", "pool_size", "budget", "test_size", "test_fraction", "derive"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown protocol keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(f"bad protocol: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "n_initial": self.n_initial, "pool_size": self.pool_size, "budget": self.budget,
            "test_size": self.test_size, "test_fraction": self.test_fraction, "derive": self.derive,
        }


# Reference benchmark split sizes.  The Perovskite row adds up to
# 143 rather than the stated 139 samples; see Protocol.derive.
PROTOCOLS = {
    "perovskite": Protocol(n_initial=20, pool_size=84, budget=40, test_size=39),
    "p3ht_cnt": Protocol(n_initial=30, pool_size=144, budget=50, test_size=59),
    "autoam": Protocol(n_initial=15, pool_size=60, budget=30, test_size=25),
    "fixture": Protocol(n_initial=20, pool_size=100, budget=30, test_size=30),
}


@dataclass(frozen=True)
class Schema:
    """How to read one CSV: target column, direction and split protocol."""

    target: str
    objective: str = "minimize"
    name: Optional[str] = None
    features: Optional[List[str]] = None
    protocol: Optional[Protocol] = None

    def __post_init__(self):
        if self.objective not in ("minimize", "maximize"):
            raise ConfigurationError(f"objective must be 'minimize' or 'maximize', got {self.objective!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        d = dict(d)
        if "target" not in d:
            raise ConfigurationError("schema must name a target column")
        proto = d.pop("protocol", None)
        if isinstance(proto, str):
            if proto not in PROTOCOLS:
                raise ConfigurationError(f"unknown protocol {proto!r}; known: {sorted(PROTOCOLS)}")
            proto = PROTOCOLS[proto]
        elif isinstance(proto, dict):
            proto = Protocol.from_dict(proto)
        unknown = set(d) - {"target", "objective", "name", "features"}
        if unknown:
            raise ConfigurationError(f"unknown schema keys: {sorted(unknown)}")
        return cls(protocol=proto, **d)

    def to_dict(self) -> dict:
        return {
            "target": self.target, "objective": self.objective, "name": self.name,
            "features": self.features,
            "protocol": None if self.protocol is None else self.protocol.to_dict(),
        }


def load_schema(path) -> Schema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestionError("schema file not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise IngestionError(f"schema is not valid JSON: {exc}", path=path) from None
    return Schema.from_dict(raw)


def scan_csv(path, schema: Schema):
    """Parse ``path`` and collect every problem instead of stopping at the first.

    Returns ``(dataset_or_None, problems)`` where ``problems`` is a list of
    :class:`IngestionError`.  Row numbers count data rows from 1.
    """
    path = Path(path)
    if not path.is_file():
        return None, [IngestionError("file not found", path=path)]
    problems = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return None, [IngestionError("empty file (no header row)", path=path)]
        header = [h.strip() for h in header]
        if schema.target not in header:
            return None, [IngestionError(f"target column {schema.target!r} not in header", path=path)]
        if schema.features is not None:
            missing = [c for c in schema.features if c not in header]
            if missing:
                return None, [IngestionError(f"feature columns {missing} not in header", path=path)]
            feat_cols = list(schema.features)
        else:
            feat_cols = [h for h in header if h != schema.target]
        if not feat_cols:
            return None, [IngestionError("no feature columns", path=path)]
        col_index = {h: i for i, h in enumerate(header)}
        wanted = feat_cols + [schema.target]
        rows = []
        for rownum, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                problems.append(IngestionError(
                    f"expected {len(header)} cells, found {len(raw)}", path=path, row=rownum))
                continue
            values = []
            ok = True
            for col in wanted:
                cell = raw[col_index[col]].strip()
                if cell == "":
                    problems.append(IngestionError("missing value", path=path, row=rownum, column=col))
                    ok = False
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    problems.append(IngestionError(
                        f"cannot parse {cell!r} as a number", path=path, row=rownum, column=col))
                    ok = False
                    continue
                if not math.isfinite(v):
                    problems.append(IngestionError(
                        f"non-finite value {cell!r}", path=path, row=rownum, column=col))
                    ok = False
                    continue
                values.append(v)
            if ok:
                rows.append(values)
    if not rows and not problems:
        return None, [IngestionError("no data rows", path=path)]
    if problems:
        return None, problems
    arr = np.array(rows, dtype=float)
    try:
        ds = Dataset(
            name=schema.name or path.stem,
            features=arr[:, :-1],
            target=arr[:, -1],
            feature_names=feat_cols,
            target_name=schema.target,
        )
    except InputError as exc:
        return None, [IngestionError(str(exc), path=path)]
    return ds, []


def load_csv(path, schema: Schema) -> Dataset:
    """Read a dataset; raises the first :class:`IngestionError` found.

    The exception's ``problems`` attribute lists every problem in the file.
    """
    ds, problems = scan_csv(path, schema)
    if problems:
        first = problems[0]
        extra = f" (and {len(problems) - 1} more problems)" if len(problems) > 1 else ""
        err = IngestionError(first.detail + extra, path=first.path, row=first.row, column=first.column)
        err.problems = problems
        raise err
    return ds


def write_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset.feature_names + [dataset.target_name])
        for x, t in zip(dataset.features, dataset.target):
            w.writerow([f"{v:.9g}" for v in x] + [f"{t:.9g}"])


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    """Per-feature min/max over kept columns plus target mean/std."""

    feature_min: np.ndarray
    feature_max: np.ndarray
    target_mean: float
    target_std: float
    kept_features: tuple
    feature_names: tuple

    def transform_features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)[:, list(self.kept_features)]
        return (X - self.feature_min) / (self.feature_max - self.feature_min)

    def inverse_features(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * (self.feature_max - self.feature_min) + self.feature_min

    def transform_target(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def inverse_target(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "feature_min": self.feature_min.tolist(), "feature_max": self.feature_max.tolist(),
            "target_mean": self.target_mean, "target_std": self.target_std,
            "kept_features": list(self.kept_features), "feature_names": list(self.feature_names),
        }


def fit_normalization(X, y, feature_names: Sequence[str]) -> NormalizationParams:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise InputError("normalization needs at least two rows")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    kept = tuple(int(i) for i in np.flatnonzero(hi > lo))
    dropped = [feature_names[i] for i in range(X.shape[1]) if i not in kept]
    if dropped:
        warnings.warn(f"dropping constant feature columns: {dropped}", stacklevel=3)
    if not kept:
        raise InputError("every feature column is constant")
    std = float(y.std())
    if not std > 0:
        raise InputError("target has zero variance; nothing to optimize")
    return NormalizationParams(
        feature_min=lo[list(kept)], feature_max=hi[list(kept)],
        target_mean=float(y.mean()), target_std=std,
        kept_features=kept, feature_names=tuple(feature_names[i] for i in kept),
    )


def normalize(dataset: Dataset):
    """Min-max scale features to [0, 1] and standardize the target.

    Statistics come from the whole dataset; constant features are dropped
    with a warning.  Returns ``(normalized_dataset, params)``.
    """
    params = fit_normalization(dataset.features, dataset.target, dataset.feature_names)
    out = Dataset(
        name=dataset.name,
        features=params.transform_features(dataset.features),
        target=params.transform_target(dataset.target),
        feature_names=list(params.feature_names),
        target_name=dataset.target_name,
    )
    return out, params


def denormalize(dataset: Dataset, params: NormalizationParams) -> Dataset:
    return Dataset(
        name=dataset.name,
        features=params.inverse_features(dataset.features),
        target=params.inverse_target(dataset.target),
        feature_names=list(dataset.feature_names),
        target_name=dataset.target_name,
    )


class Part(NamedTuple):
    X: np.ndarray
    y: np.ndarray
    rows: np.ndarray  # indices into the source dataset


@dataclass(frozen=True, eq=False)
class CampaignSplit:
    name: str
    initial: Part
    pool: Part
    test: Part
    normalization: NormalizationParams
    seed: int
    protocol: Protocol
    meta: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for part in (self.initial, self.pool, self.test):
            for a in part:
                h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def make_split(dataset: Dataset, protocol: Protocol, seed: int) -> CampaignSplit:
    """Seeded uniform three-way split of ``dataset`` per ``protocol``."""
    n_init, n_pool, n_test = protocol.resolve(dataset.n)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    test_rows = np.sort(perm[:n_test])
    init_rows = np.sort(perm[n_test:n_test + n_init])
    pool_rows = np.sort(perm[n_test + n_init:])
    train_rows = np.concatenate([init_rows, pool_rows])
    params = fit_normalization(dataset.features[train_rows], dataset.target[train_rows],
                               dataset.feature_names)

    def part(rows):
        return Part(params.transform_features(dataset.features[rows]),
                    params.transform_target(dataset.target[rows]), rows)

    return CampaignSplit(
        name=dataset.name, initial=part(init_rows), pool=part(pool_rows), test=part(test_rows),
        normalization=params, seed=int(seed), protocol=protocol,
    )


def f_1d(x):
    """Noiseless two-peak test function ``-sin(3x) - x^2 + 0.7x``."""
    x = np.asarray(x, dtype=float)
    return -np.sin(3.0 * x) - x * x + 0.7 * x


def synth_1d(x: float, noise_std: float = 0.2, rng: Optional[np.random.Generator] = None) -> float:
    """One noisy observation of :func:`f_1d` at ``x`` in [-1, 2]."""
    lo, hi = X_RANGE_1D
    if not (math.isfinite(x) and lo <= x <= hi):
        raise InputError(f"x={x} outside the input range [{lo}, {hi}]")
    if noise_std < 0:
        raise InputError("noise_std must be non-negative")
    y = float(f_1d(x))
    if noise_std > 0:
        if rng is None:
            raise InputError("a random generator is required when noise_std > 0")
        y += noise_std * float(rng.standard_normal())
    return y


def make_1d_split(grid_size: int = 61, seed: int = 0, noise_std: float = 0.2,
                  budget: int = 11, initial: Sequence[float] = INITIAL_1D) -> CampaignSplit:
    """Campaign over a uniform grid on [-1, 2] with fixed initial points.

    Noise is drawn from ``seed`` for the initial points first, then for the
    pool in grid order.  The test part is empty.
    """
    if grid_size < 13:
        raise ConfigurationError("grid_size must be at least 13")
    rng = np.random.default_rng(seed)
    x_init = np.asarray(initial, dtype=float)
    y_init = np.array([synth_1d(x, noise_std, rng) for x in x_init])
    grid = np.linspace(*X_RANGE_1D, grid_size)
    y_pool = np.array([synth_1d(x, noise_std, rng) for x in grid])
    protocol = Protocol(n_initial=len(x_init), pool_size=grid_size, budget=budget, test_size=0)
    protocol.resolve(len(x_init) + grid_size)
    params = fit_normalization(
        np.concatenate([x_init, grid])[:, None], np.concatenate([y_init, y_pool]), ["x"]
    )
    empty = np.empty(0, dtype=int)
    return CampaignSplit(
        name="synth_1d",
        initial=Part(params.transform_features(x_init[:, None]), params.transform_target(y_init),
                     np.arange(len(x_init))),
        pool=Part(params.transform_features(grid[:, None]), params.transform_target(y_pool),
                  np.arange(grid_size)),
        test=Part(np.empty((0, 1)), np.empty(0), empty),
        normalization=params, seed=int(seed), protocol=protocol,
        meta={"noise_std": float(noise_std), "grid": grid},
    )


def fixture_function(X) -> np.ndarray:
    """Multimodal 4-d test surface used to build the bundled fixture."""
    X = np.asarray(X, dtype=float)
    centres = np.array([[0.2, 0.7, 0.3, 0.6], [0.75, 0.25, 0.8, 0.3], [0.5, 0.5, 0.1, 0.9]])
    depths = np.array([1.0, 0.8, 0.6])
    width = 0.3
    d2 = ((X[:, None, :] - centres[None, :, :]) ** 2).sum(axis=-1)
    wells = -(depths * np.exp(-d2 / (2 * width ** 2))).sum(axis=1)
    ripple = 0.1 * np.sin(2 * np.pi * X[:, 0]) * np.cos(np.pi * X[:, 2])
    return wells + ripple + 0.1 * X[:, 1] * X[:, 3]


def make_fixture_dataset(seed: int = 150, n: int = 150, noise_std: float = 0.02) -> Dataset:
    """Seeded synthetic 4-feature dataset; the minimum is the target."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, 4))
    y = fixture_function(X) + noise_std * rng.standard_normal(n)
    X = np.array([[float(f"{v:.9g}") for v in row] for row in X])
    y = np.array([float(f"{v:.9g}") for v in y])
    return Dataset("fixture", X, y, ["x1", "x2", "x3", "x4"], "property")


FIXTURE_DIR = Path(__file__).parent / "fixtures"
FIXTURE_CSV = FIXTURE_DIR / "synthetic_150x4.csv"
FIXTURE_SCHEMA = FIXTURE_DIR / "synthetic_150x4.schema.json"
