"""Repetition harness, metrics and report files.

Every repetition draws one split from a seed derived from the base seed and
the repetition number; all policies in that repetition run on that same
split.  Reports are a JSON summary plus flat CSV files for plotting.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import gp
from .data import CampaignSplit, Dataset, Protocol, f_1d, make_1d_split, make_split, X_RANGE_1D
from .errors import EvaluationError, InputError, TdueError
from .loop import CampaignConfig, PolicyKind, RunRecord, run_campaign

POLICY_ORDER = (PolicyKind.EI_ONLY, PolicyKind.UCB_ONLY, PolicyKind.TDUE)


def fmt(x) -> str:
    """Float formatting used by every CSV report (9 significant digits)."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def quantize(x: float) -> float:
    """Round to the precision written in the CSV reports."""
    return float(fmt(x))


def rmse(actual, predicted) -> float:
    actual = np.asarray(actual, dtype=float).ravel()
    predicted = np.asarray(predicted, dtype=float).ravel()
    if actual.shape != predicted.shape:
        raise InputError(f"length mismatch: {actual.size} actual vs {predicted.size} predicted")
    if actual.size == 0:
        raise InputError("rmse of an empty vector")
    return float(np.sqrt(np.mean((actual - predicted) ** 2)))


def evaluate_run(record: RunRecord, final_model: Optional[gp.GpModel], test_set) -> float:
    """Test RMSE of the final surrogate in normalized target units.

    ``test_set`` is anything unpacking to ``(X, y, ...)`` such as a split's
    ``test`` part; targets are in the dataset's own orientation.
    """
    if record.failed or final_model is None:
        raise EvaluationError(f"cannot evaluate a failed run: {record.failure}")
    X, y = test_set[0], test_set[1]
    if len(y) == 0:
        raise EvaluationError("test set is empty")
    means, _ = gp.predict(final_model, X)
    return rmse(y, record.sign * means)


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    iqr: float


def summarize(rmses: Sequence[float]) -> Summary:
    """Mean, median and interquartile range (linear-interpolation quartiles)."""
    a = np.asarray(rmses, dtype=float)
    if a.size == 0:
        raise InputError("cannot summarize an empty list")
    q1, med, q3 = np.percentile(a, [25, 50, 75], method="linear")
    return Summary(float(a.mean()), float(med), float(q3 - q1))


def convergence_iteration(record: RunRecord, pool_optimum: Optional[float] = None) -> Optional[int]:
    """First sequential selection that hit the pool optimum, or None.

    ``pool_optimum`` is in maximization form, like the record's targets.
    Points in the initial set never count.
    """
    target = record.pool_optimum if pool_optimum is None else pool_optimum
    for e in record.entries:
        if e.observed_target == target:
            return e.iteration
    return None


def repetition_seed(base_seed: int, repetition: int) -> int:
    return int(np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, repetition]).generate_state(1)[0])


@dataclass
class RunResult:
    dataset: str
    policy: PolicyKind
    repetition: int
    seed: int
    split_fingerprint: str
    record: RunRecord
    rmse: Optional[float]
    error: Optional[str] = None


@dataclass
class Cell:
    rmses: List[Optional[float]]
    iterations_to_best: List[Optional[int]]
    switch_iterations: List[Optional[int]]
    failures: int
    stats: Optional[Summary]

    def to_dict(self) -> dict:
        return {
            "n_runs": len(self.rmses),
            "n_failed": self.failures,
            "mean": None if self.stats is None else self.stats.mean,
            "median": None if self.stats is None else self.stats.median,
            "iqr": None if self.stats is None else self.stats.iqr,
            "rmses": self.rmses,
            "iterations_to_best": self.iterations_to_best,
            "switch_iterations": self.switch_iterations,
        }


@dataclass
class BenchmarkSummary:
    dataset: str
    protocol: Protocol
    policies: List[PolicyKind]
    repetitions: int
    base_seed: int
    cells: Dict[PolicyKind, Cell]
    runs: List[RunResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "protocol": self.protocol.to_dict(),
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "policies": {p.value: self.cells[p].to_dict() for p in self.policies},
        }


def _run_one(args):
    dataset, protocol, policy, repetition, base_seed, template = args
    seed = repetition_seed(base_seed, repetition)
    split = make_split(dataset, protocol, seed)
    config = replace(template, budget=protocol.budget, policy_kind=policy, seed=seed)
    record = run_campaign(split, config)
    value, error = None, None
    if record.failed:
        error = record.failure
    else:
        try:
            value = quantize(evaluate_run(record, record.final_model, split.test))
        except TdueError as exc:
            error = str(exc)
    record.final_model = None
    return RunResult(dataset.name, policy, repetition, seed, split.fingerprint(), record, value, error)


def default_jobs(repetitions: int) -> int:
    return max(1, min(repetitions, os.cpu_count() or 1))


def run_benchmark(dataset: Dataset, protocol: Protocol, policies: Iterable = POLICY_ORDER,
                  repetitions: int = 30, base_seed: int = 0,
                  template: Optional[CampaignConfig] = None, n_jobs: Optional[int] = None,
                  objective: str = "minimize") -> BenchmarkSummary:
    """Run every policy ``repetitions`` times on paired seeded splits.

    ``template`` supplies everything except budget, policy and seed.
    Results are ordered by (repetition, policy) whatever the completion
    order; failed runs are counted, not raised.
    """
    if repetitions < 1:
        raise InputError("repetitions must be >= 1")
    protocol.resolve(dataset.n)
    policies = [PolicyKind(p) for p in policies]
    policies = [p for p in POLICY_ORDER if p in policies]
    if not policies:
        raise InputError("no policies selected")
    if template is None:
        template = CampaignConfig(budget=protocol.budget, objective=objective)
    tasks = [(dataset, protocol, p, r, base_seed, template)
             for r in range(repetitions) for p in policies]
    n_jobs = default_jobs(repetitions) if n_jobs is None else n_jobs
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: (r.repetition, POLICY_ORDER.index(r.policy)))

    cells = {}
    for p in policies:
        mine = [r for r in results if r.policy is p]
        ok = [r.rmse for r in mine if r.rmse is not None]
        cells[p] = Cell(
            rmses=[r.rmse for r in mine],
            iterations_to_best=[None if r.record.failed else convergence_iteration(r.record) for r in mine],
            switch_iterations=[r.record.switch_iteration for r in mine],
            failures=sum(r.rmse is None for r in mine),
            stats=summarize(ok) if ok else None,
        )
    return BenchmarkSummary(dataset.name, protocol, policies, repetitions, base_seed, cells, results)


# --- 1-d illustrative experiment -------------------------------------------------

TRUTH_GRID_1D = 300


@dataclass
class Demo1dResult:
    policy: PolicyKind
    split: CampaignSplit
    record: RunRecord
    trace: List[tuple]  # (iteration, x, mean, std), original units
    truth_rmse: float
    selected_x: np.ndarray


def demo_1d_config(policy, seed: int, budget: int = 11, **overrides) -> CampaignConfig:
    kw = dict(budget=budget, objective="maximize", policy_kind=policy, seed=seed, ard=False)
    kw.update(overrides)
    return CampaignConfig(**kw)


def run_demo_1d(policy, seed: int = 0, noise_std: float = 0.2, budget: int = 11,
                grid_size: int = 61, trace_points: int = TRUTH_GRID_1D, **overrides) -> Demo1dResult:
    """One illustrative campaign on the two-peak test function.

    The trace holds posterior mean and std on a dense grid after the initial
    fit and after every selection, in the function's own units.
    """
    split = make_1d_split(grid_size=grid_size, seed=seed, noise_std=noise_std, budget=budget)
    params = split.normalization
    xs = np.linspace(*X_RANGE_1D, trace_points)
    zs = params.transform_features(xs[:, None])
    trace = []

    def capture(t, model, state):
        m, v = gp.predict(model, zs)
        mean = params.inverse_target(m)
        std = np.sqrt(v) * params.target_std
        trace.extend((t, float(x), float(a), float(b)) for x, a, b in zip(xs, mean, std))

    config = demo_1d_config(policy, seed, budget, **overrides)
    record = run_campaign(split, config, on_iteration=capture)
    if record.failed:
        raise EvaluationError(f"1-d campaign failed: {record.failure}")
    final = np.array([r[2] for r in trace if r[0] == trace[-1][0]])
    truth = rmse(f_1d(xs), final)
    sel = split.meta["grid"][[e.selected_pool_index for e in record.entries]]
    return Demo1dResult(PolicyKind(policy), split, record, trace, truth, sel)


# --- report files ------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_posterior_1d(path, trace) -> Path:
    path = Path(path)
    _write_csv(path, ["iteration", "x", "mean", "std"],
               ([t, fmt(x), fmt(m), fmt(s)] for t, x, m, s in trace))
    return path


def convergence_rows(dataset: str, run: RunResult):
    rec = run.record
    for e in rec.entries:
        yield [dataset, run.policy.value, run.repetition, e.iteration,
               fmt(rec.sign * e.best_so_far), e.mode.value]


def emit_reports(summaries: Sequence[BenchmarkSummary], out_dir, posterior=None,
                 effective_config: Optional[dict] = None) -> List[Path]:
    """Write summary.json, rmse_raw.csv and convergence.csv (and optionally
    posterior_1d.csv from a list of trace rows).  Returns the written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    rows = []
    for s in summaries:
        for p in s.policies:
            rows.append({"dataset": s.dataset, "policy": p.value, **s.cells[p].to_dict()})
    doc = {
        "paired_splits": True,
        "quantiles": "linear",
        "rmse_units": "normalized target",
        "datasets": [s.to_dict() for s in summaries],
        "rows": rows,
    }
    if effective_config is not None:
        doc["effective_config"] = effective_config
    path = out / "summary.json"
    try:
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    written.append(path)

    path = out / "rmse_raw.csv"
    _write_csv(path, ["dataset", "policy", "repetition", "rmse"],
               ([s.dataset, r.policy.value, r.repetition, fmt(r.rmse if r.rmse is not None else math.nan)]
                for s in summaries for r in s.runs))
    written.append(path)

    path = out / "convergence.csv"
    _write_csv(path, ["dataset", "policy", "repetition", "iteration", "best_so_far", "mode"],
               (row for s in summaries for r in s.runs for row in convergence_rows(s.dataset, r)))
    written.append(path)

    if posterior is not None:
        written.append(write_posterior_1d(out / "posterior_1d.csv", posterior))
    return written


def read_rmse_raw(path) -> Dict[tuple, List[float]]:
    """Parse rmse_raw.csv into ``{(dataset, policy): [rmse, ...]}`` (NaN dropped)."""
    out: Dict[tuple, List[float]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            v = float(row["rmse"])
            out.setdefault((row["dataset"], row["policy"]), [])
            if not math.isnan(v):
                out[(row["dataset"], row["policy"])].append(v)
    return out
