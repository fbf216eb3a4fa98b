"""Command-line interface: ``tduebo bench | demo1d | validate``.

Settings resolve as command-line flags, then the ``--config`` JSON file,
then built-in defaults.  The effective configuration is printed and saved
next to the reports so every run can be repeated exactly.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from . import __version__, bench, data
from ._backend import BACKEND
from .acquisition import AcqParams
from .errors import (
    ConfigurationError,
    ConsistencyError,
    EvaluationError,
    IngestionError,
    InputError,
    NumericalSingularityError,
)
from .loop import CampaignConfig, PolicyKind

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "TDUEBO_OUTPUT_ROOT"
POLICY_NAMES = {p.value: p for p in PolicyKind}


@dataclass
class RunConfig:
    """Every setting a command can use, with its default."""

    datasets: List[str] = field(default_factory=list)  # empty: bundled fixture
    schemas: List[str] = field(default_factory=list)  # default: <csv stem>.schema.json
    target: Optional[str] = None
    objective: Optional[str] = None  # default: from schema, else minimize
    protocol: Optional[object] = None  # builtin name or dict of Protocol fields
    policies: List[str] = field(default_factory=lambda: ["ei", "ucb", "tdue"])
    xi: float = 0.01
    kappa: float = 2.0
    threshold_kind: str = "relative"
    threshold_value: float = 0.5
    reps: int = 30
    seed: int = 0
    out: Optional[str] = None
    kernel: str = "matern52"
    refit: bool = True
    jobs: Optional[int] = None
    noise: float = 0.2
    budget: int = 11
    grid_size: int = 61

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def validate(self):
        bad = [p for p in self.policies if p not in POLICY_NAMES]
        if bad:
            raise ConfigurationError(f"unknown policy {bad[0]!r}; choose from {sorted(POLICY_NAMES)}")
        if not self.policies:
            raise ConfigurationError("no policies selected")
        if self.reps < 1:
            raise ConfigurationError("--reps must be >= 1")
        if self.kernel not in ("matern52", "sqexp"):
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")
        if self.threshold_kind not in ("relative", "absolute"):
            raise ConfigurationError(f"unknown threshold kind {self.threshold_kind!r}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        if self.schemas and len(self.schemas) != len(self.datasets):
            raise ConfigurationError("give one --schema per --dataset, or none")
        if self.objective not in (None, "minimize", "maximize"):
            raise ConfigurationError(f"objective must be minimize or maximize, got {self.objective!r}")
        AcqParams(self.xi, self.kappa)
        return self

    def template(self, objective: str) -> CampaignConfig:
        return CampaignConfig(
            budget=1, objective=objective, acq_params=AcqParams(self.xi, self.kappa),
            threshold_kind=self.threshold_kind, threshold_value=self.threshold_value,
            refit_hyperparameters=self.refit, kernel=self.kernel, seed=self.seed,
        )


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> List[str]:
    return [t.strip().lower() for t in text.split(",") if t.strip()]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command> or ./tduebo-out/<command>)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--policies", type=_csv_list, help="comma-separated subset of ei,ucb,tdue")
    p.add_argument("--xi", type=float, help="EI exploration offset (default 0.01)")
    p.add_argument("--kappa", type=float, help="UCB multiplier (default 2.0)")
    p.add_argument("--threshold-kind", choices=["relative", "absolute"], dest="threshold_kind")
    p.add_argument("--threshold-value", type=float, dest="threshold_value",
                   help="fraction of baseline uncertainty (relative) or raw level (absolute); default 0.5")
    p.add_argument("--kernel", choices=["matern52", "sqexp"])
    p.add_argument("--no-refit", dest="refit", action="store_const", const=False,
                   help="fit hyperparameters once on the initial set only")
    p.add_argument("--jobs", type=int, help="worker processes (default: min(reps, cores))")


def _add_dataset(p: argparse.ArgumentParser):
    p.add_argument("--dataset", action="append", dest="datasets", metavar="CSV",
                   help="dataset CSV; repeat for several (default: bundled fixture)")
    p.add_argument("--schema", action="append", dest="schemas", metavar="JSON",
                   help="schema file per dataset (default: <csv stem>.schema.json)")
    p.add_argument("--target", help="target column when no schema file exists")
    p.add_argument("--objective", choices=["minimize", "maximize"])
    p.add_argument("--protocol", help=f"builtin split protocol: {', '.join(sorted(data.PROTOCOLS))}")
    p.add_argument("--n-initial", type=int, dest="n_initial")
    p.add_argument("--pool-size", type=int, dest="pool_size")
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--budget", type=int, dest="proto_budget", help="sequential selections")
    p.add_argument("--derive-sizes", action="store_const", const=True, dest="derive",
                   help="recompute pool/test sizes from a 25%% test fraction and the row count")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tduebo", description="Threshold-driven UCB/EI Bayesian optimization benchmarks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bench", help="repeated pool-replay campaigns with RMSE/convergence reports")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--reps", type=int, help="repetitions per policy (default 30)")

    p = sub.add_parser("demo1d", help="the 1-d two-peak illustration with posterior traces")
    _add_common(p)
    p.add_argument("--noise", type=float, help="observation noise std (default 0.2)")
    p.add_argument("--budget", type=int, help="sequential selections (default 11)")
    p.add_argument("--grid-size", type=int, dest="grid_size", help="candidate grid size (default 61)")

    p = sub.add_parser("validate", help="check dataset files and protocol feasibility only")
    p.add_argument("--config", help="JSON file with RunConfig keys")
    _add_dataset(p)
    return parser


_PROTO_FLAGS = ("n_initial", "pool_size", "test_size", "proto_budget", "derive")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigurationError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(base)
    names = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    cfg = replace(cfg, **overrides)
    proto_over = {k: getattr(args, k, None) for k in _PROTO_FLAGS}
    proto_over = {("budget" if k == "proto_budget" else k): v for k, v in proto_over.items() if v is not None}
    if proto_over:
        merged = _protocol_dict(cfg.protocol)
        merged.update(proto_over)
        cfg = replace(cfg, protocol=merged)
    return cfg.validate()


def _protocol_dict(proto) -> dict:
    if proto is None:
        return {}
    if isinstance(proto, str):
        if proto not in data.PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {proto!r}; known: {sorted(data.PROTOCOLS)}")
        return data.PROTOCOLS[proto].to_dict()
    if isinstance(proto, dict):
        return dict(proto)
    raise ConfigurationError(f"protocol must be a name or an object, got {proto!r}")


def _dataset_specs(cfg: RunConfig):
    """Yield ``(csv_path, schema)`` pairs for the configured datasets."""
    if not cfg.datasets:
        yield data.FIXTURE_CSV, _apply_overrides(data.load_schema(data.FIXTURE_SCHEMA), cfg)
        return
    for i, path in enumerate(cfg.datasets):
        path = Path(path)
        if cfg.schemas:
            schema = data.load_schema(cfg.schemas[i])
        elif path.with_suffix(".schema.json").is_file():
            schema = data.load_schema(path.with_suffix(".schema.json"))
        elif cfg.target:
            schema = data.Schema(target=cfg.target)
        else:
            raise ConfigurationError(f"no schema for {path}: pass --schema or --target")
        yield path, _apply_overrides(schema, cfg)


def _apply_overrides(schema: data.Schema, cfg: RunConfig) -> data.Schema:
    if cfg.target:
        schema = replace(schema, target=cfg.target)
    if cfg.objective:
        schema = replace(schema, objective=cfg.objective)
    if cfg.protocol is not None:
        base = _protocol_dict(cfg.protocol)
        if schema.protocol is not None and not isinstance(cfg.protocol, str):
            base = {**schema.protocol.to_dict(), **base}
        schema = replace(schema, protocol=data.Protocol.from_dict(base))
    return schema


def _protocol_for(schema: data.Schema, dataset: data.Dataset) -> data.Protocol:
    if schema.protocol is not None:
        return schema.protocol
    key = dataset.name.lower().replace("/", "_").replace("-", "_")
    if key in data.PROTOCOLS:
        return data.PROTOCOLS[key]
    raise ConfigurationError(f"no split protocol for dataset {dataset.name!r}: set one in the schema or via --protocol")


def _out_dir(cfg: RunConfig, command: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / command if root else Path("tduebo-out") / command


def _echo_config(cfg: RunConfig, out: Optional[Path], command: str) -> dict:
    eff = {"command": command, "backend": BACKEND, **asdict(cfg)}
    if out is not None:
        eff["out"] = str(out)
    print("effective config:")
    print(json.dumps(eff, indent=2, default=str))
    return eff


def cmd_bench(cfg: RunConfig) -> int:
    out = _out_dir(cfg, "bench")
    specs = list(_dataset_specs(cfg))
    loaded = []
    for path, schema in specs:
        ds = data.load_csv(path, schema)
        loaded.append((ds, schema, _protocol_for(schema, ds)))
    for ds, _, proto in loaded:
        proto.resolve(ds.n)
    eff = _echo_config(cfg, out, "bench")
    eff["resolved"] = [{"dataset": ds.name, "objective": s.objective, "protocol": p.to_dict()}
                       for ds, s, p in loaded]
    summaries = []
    for ds, schema, proto in loaded:
        summaries.append(bench.run_benchmark(
            ds, proto, cfg.policies, cfg.reps, cfg.seed, template=cfg.template(schema.objective),
            n_jobs=cfg.jobs, objective=schema.objective,
        ))
    bench.emit_reports(summaries, out, effective_config=eff)
    _write_effective(out, eff)
    print_summary_table(summaries)
    print(f"reports written to {out}")
    return EXIT_OK


def print_summary_table(summaries):
    print(f"{'dataset':<14} {'policy':<6} {'mean':>10} {'median':>10} {'IQR':>10} {'failed':>6} {'converged':>9}")
    for s in summaries:
        for p in s.policies:
            c = s.cells[p]
            st = c.stats
            conv = sum(i is not None for i in c.iterations_to_best)
            vals = ("-", "-", "-") if st is None else (bench.fmt(st.mean), bench.fmt(st.median), bench.fmt(st.iqr))
            print(f"{s.dataset:<14} {p.value:<6} {vals[0]:>10} {vals[1]:>10} {vals[2]:>10} "
                  f"{c.failures:>6} {conv:>6}/{len(c.rmses)}")


def _write_effective(out: Path, eff: dict):
    (out / "effective_config.json").write_text(json.dumps(eff, indent=2, default=str) + "\n", encoding="utf-8")


def cmd_demo1d(cfg: RunConfig) -> int:
    out = _out_dir(cfg, "demo1d")
    eff = _echo_config(cfg, out, "demo1d")
    overrides = dict(
        acq_params=AcqParams(cfg.xi, cfg.kappa), threshold_kind=cfg.threshold_kind,
        threshold_value=cfg.threshold_value, refit_hyperparameters=cfg.refit, kernel=cfg.kernel,
    )
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    conv = []
    for name in cfg.policies:
        res = bench.run_demo_1d(POLICY_NAMES[name], seed=cfg.seed, noise_std=cfg.noise,
                                budget=cfg.budget, grid_size=cfg.grid_size, **overrides)
        sub = out / name
        sub.mkdir(exist_ok=True)
        bench.write_posterior_1d(sub / "posterior_1d.csv", res.trace)
        rows.append({
            "policy": name, "truth_rmse": res.truth_rmse, "switch_iteration": res.record.switch_iteration,
            "selected_x": res.selected_x.tolist(),
            "best_observed": float(res.split.normalization.inverse_target(
                res.record.sign * res.record.entries[-1].best_so_far)),
        })
        conv.extend(bench.convergence_rows("synth_1d", bench.RunResult(
            "synth_1d", res.policy, 0, cfg.seed, res.split.fingerprint(), res.record, None)))
        print(f"{name:<5} truth RMSE {bench.fmt(res.truth_rmse):>12}  switch {res.record.switch_iteration}  "
              f"selected {', '.join(bench.fmt(x) for x in res.selected_x)}")
    bench._write_csv(out / "convergence.csv",
                     ["dataset", "policy", "repetition", "iteration", "best_so_far", "mode"], conv)
    (out / "summary.json").write_text(json.dumps({"runs": rows, "effective_config": eff}, indent=2,
                                                 default=str) + "\n", encoding="utf-8")
    _write_effective(out, eff)
    print(f"traces written to {out}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    status = EXIT_OK
    for path, schema in _dataset_specs(cfg):
        ds, problems = data.scan_csv(path, schema)
        if problems:
            print(f"{path}: INVALID ({len(problems)} problems)")
            for p in problems:
                print(f"  - {p}")
            status = max(status, EXIT_DATA)
            continue
        print(f"{path}: valid, n={ds.n}, d={ds.d}")
        try:
            proto = _protocol_for(schema, ds)
            n_init, n_pool, n_test = proto.resolve(ds.n)
        except ConfigurationError as exc:
            print(f"  protocol mismatch: {exc}")
            status = max(status, EXIT_USAGE)
            continue
        print(f"  protocol: training {n_init + n_pool} = {n_init} initial + {n_pool} pool "
              f"(budget {proto.budget}), test {n_test}")
    return status


COMMANDS = {"bench": cmd_bench, "demo1d": cmd_demo1d, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except IngestionError as exc:
        print(f"data error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalSingularityError, ConsistencyError) as exc:
        print(f"numerical failure [gp]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EvaluationError as exc:
        print(f"numerical failure [bench]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, InputError) as exc:
        print(f"configuration error [config]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
