"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line for its criterion and then
asserts, so the lines appear in ``pytest -v`` output whatever the outcome.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from oracles import direct_posterior
from tduebo import bench, cli, data, gp
from tduebo.acquisition import Mode, PolicyState, ei_score, update_policy
from tduebo.loop import CampaignConfig, run_campaign

SQRT_12_5 = 3.53553390593273762200422181052  # mpmath


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def test_1_gp_oracle_equivalence(capsys):
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(100):
        n, d = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        kind = "matern52" if i % 2 == 0 else "sqexp"
        X = rng.random((n, d))
        y = rng.standard_normal(n)
        Xs = rng.random((5, d))
        ls = tuple(np.exp(rng.uniform(np.log(0.1), np.log(3.0), d)))
        sv, nv = float(np.exp(rng.uniform(-1, 1))), float(np.exp(rng.uniform(np.log(1e-4), 0)))
        model = gp.fit(X, y, gp.HyperParams(ls, sv, nv), kind=kind)
        mean, var = gp.predict(model, Xs)
        m_ref, v_ref = direct_posterior(X, y, Xs, ls, sv, nv, float(np.mean(y)), kind)
        worst = max(worst, float(np.abs(mean - m_ref).max()), float(np.abs(var - v_ref).max()))
    report(capsys, 1, worst <= 1e-8, f"100 GP instances, max |diff| {worst:.2e} (tol 1e-8)")


def test_2_ei_monte_carlo(capsys):
    rng = np.random.default_rng(202)
    agree = 0
    for _ in range(50):
        mean, std = rng.normal(0, 1), rng.uniform(0.05, 2.0)
        f_best, xi = rng.normal(0, 1), rng.uniform(0, 0.1)
        draws = rng.normal(mean, std, 10**6)
        gain = np.maximum(0.0, draws - f_best - xi)
        se = gain.std(ddof=1) / math.sqrt(gain.size)
        agree += abs(ei_score(mean, std, f_best, xi) - gain.mean()) <= 3 * se
    report(capsys, 2, agree >= 48, f"EI within 3 SE of Monte Carlo in {agree}/50 cases (need >= 48)")


def test_3_conditioning_monotone(capsys):
    rng = np.random.default_rng(303)
    worst = -math.inf
    sigma_ok = True
    for _ in range(20):
        d = int(rng.integers(1, 4))
        hyper = gp.HyperParams(tuple(rng.uniform(0.1, 1.0, d)), float(rng.uniform(0.5, 2)),
                               float(10 ** rng.uniform(-6, -1)))
        probes = rng.random((100, d))
        seq = rng.random((25, d))
        y = rng.standard_normal(25)
        prev_var, prev_sigma = None, None
        for k in range(1, 26):
            model = gp.fit(seq[:k], y[:k], hyper)
            _, var = gp.predict(model, probes)
            sigma = gp.average_uncertainty(model, probes)
            if prev_var is not None:
                worst = max(worst, float((var - prev_var).max()))
                sigma_ok &= sigma <= prev_sigma + 1e-10
            prev_var, prev_sigma = var, sigma
    ok = worst <= 1e-10 and sigma_ok
    report(capsys, 3, ok, f"20 growth sequences x 100 probes, max variance increase {worst:.2e} (tol 1e-10), "
                          f"sigma_bar non-increasing: {sigma_ok}")


def test_4_policy_state_machine(capsys):
    rng = np.random.default_rng(404)
    bad = 0
    for _ in range(10**4):
        length = int(rng.integers(1, 30))
        sig = rng.uniform(0, 2, length) * (rng.uniform(0.2, 1.2) ** np.arange(length))
        alpha = float(rng.uniform(0.05, 0.95))
        state = PolicyState(threshold_value=alpha)
        modes = []
        for t, s in enumerate(sig):
            state = update_policy(state, float(s), t)
            modes.append(state.mode)
        flips = [(a, b) for a, b in zip(modes, modes[1:]) if a != b]
        cross = [t for t in range(1, length) if sig[t] < alpha * sig[0]]
        expected = cross[0] if cross else None
        if len(flips) > 1 or any(f != (Mode.UCB, Mode.EI) for f in flips) or state.switch_iteration != expected:
            bad += 1

    mismatches, compared, switched = 0, 0, 0
    for seed in range(10):
        split = data.make_1d_split(seed=seed)
        runs = {p: run_campaign(split, CampaignConfig(budget=11, policy_kind=p, seed=seed))
                for p in ("tdue", "ucb")}
        t = runs["tdue"].switch_iteration
        switched += t is not None
        stop = 11 if t is None else t
        for a, b in zip(runs["tdue"].entries[:stop], runs["ucb"].entries[:stop]):
            compared += 1
            mismatches += a.selected_pool_index != b.selected_pool_index
    ok = bad == 0 and mismatches == 0 and switched > 0
    report(capsys, 4, ok, f"10^4 sigma_bar sequences with {bad} violations; TDUE vs UCB-only "
                          f"{mismatches}/{compared} pre-switch selection mismatches over 10 seeds "
                          f"({switched} switched)")


def test_5_one_dimensional_experiment(capsys):
    grid = np.linspace(-1.0, 2.0, 10**5)
    x_star = grid[int(np.argmax(data.f_1d(grid)))]
    better, hits = 0, 0
    for seed in range(50):
        tdue = bench.run_demo_1d("tdue", seed=seed)
        ei = bench.run_demo_1d("ei", seed=seed)
        better += tdue.truth_rmse <= ei.truth_rmse
        hits += bool(np.min(np.abs(tdue.selected_x - x_star)) <= 0.15)
    ok = better >= 30 and hits >= 40
    report(capsys, 5, ok, f"TDUE RMSE <= EI RMSE in {better}/50 seeds (need >= 30); "
                          f"TDUE within 0.15 of x*={x_star:.5f} in {hits}/50 (need >= 40)")


def _reference_sized_csv(tmp_path, name, n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    centres = rng.random((3, d))
    y = -sum(np.exp(-((X - c) ** 2).sum(axis=1) / 0.1) * w for c, w in zip(centres, (1.0, 0.7, 0.5)))
    y = y + 0.3 * np.sin(4 * X[:, 0]) + 0.02 * rng.standard_normal(n)
    ds = data.Dataset(name, X, y, [f"x{i + 1}" for i in range(d)], "target")
    path = tmp_path / f"{name}.csv"
    data.write_csv(ds, path)
    (tmp_path / f"{name}.schema.json").write_text(json.dumps(
        {"target": "target", "objective": "minimize", "protocol": name}))
    return path


REFERENCE_SIZES = {
    # name: (rows, features, (initial, pool, test), budget)
    "perovskite": (143, 3, (20, 84, 39), 40),
    "p3ht_cnt": (233, 5, (30, 144, 59), 50),
    "autoam": (100, 4, (15, 60, 25), 30),
}


@pytest.mark.slow
def test_6_protocol_fidelity(capsys, tmp_path):
    paths = {name: _reference_sized_csv(tmp_path, name, n, d, i)
             for i, (name, (n, d, _, _)) in enumerate(REFERENCE_SIZES.items())}
    out = tmp_path / "bench"
    argv = ["bench", "--reps", "30", "--seed", "7", "--out", str(out)]
    for p in paths.values():
        argv += ["--dataset", str(p)]
    with capsys.disabled():
        code = cli.main(argv)

    problems = []
    for name, (n, _, sizes, budget) in REFERENCE_SIZES.items():
        ds = data.load_csv(paths[name], data.load_schema(paths[name].with_suffix("").with_suffix(".schema.json")))
        proto = data.PROTOCOLS[name]
        for r in range(30):
            s = data.make_split(ds, proto, bench.repetition_seed(7, r))
            got = (len(s.initial.y), len(s.pool.y), len(s.test.y))
            if got != sizes or proto.budget != budget:
                problems.append(f"{name} rep {r}: {got}, budget {proto.budget}")
    raw = bench.read_rmse_raw(out / "rmse_raw.csv") if code == 0 else {}
    counts = {k: len(v) for k, v in raw.items()}
    for name in REFERENCE_SIZES:
        for pol in ("ei", "ucb", "tdue"):
            if counts.get((name, pol)) != 30:
                problems.append(f"{name}/{pol}: {counts.get((name, pol))} RMSEs")
    with (out / "convergence.csv").open() as fh:
        per_run = {}
        for row in csv.DictReader(fh):
            key = (row["dataset"], row["policy"], row["repetition"])
            per_run[key] = per_run.get(key, 0) + 1
    for (name, _, _), k in per_run.items():
        if k != REFERENCE_SIZES[name][3]:
            problems.append(f"{name}: trace of length {k}")
    ok = code == 0 and not problems and len(per_run) == 270
    report(capsys, 6, ok, "splits 20/84/39 (b 40), 30/144/59 (b 50), 15/60/25 (b 30) and 30 RMSEs per "
                          f"policy per dataset; exit {code}; problems: {problems[:3] or 'none'}")


@pytest.mark.slow
def test_7_fixture_benchmark(capsys, tmp_path):
    out = tmp_path / "fixture"
    start = time.perf_counter()
    with capsys.disabled():
        code = cli.main(["bench", "--reps", "30", "--seed", "0", "--out", str(out)])
    elapsed = time.perf_counter() - start
    worst, rows = math.inf, 0
    if code == 0:
        doc = json.loads((out / "summary.json").read_text())
        raw = bench.read_rmse_raw(out / "rmse_raw.csv")
        worst = 0.0
        for row in doc["rows"]:
            rows += 1
            vals = raw[(row["dataset"], row["policy"])]
            s = bench.summarize(vals)
            if len(vals) != 30 or row["n_runs"] != 30:
                worst = math.inf
            for key in ("mean", "median", "iqr"):
                worst = max(worst, abs(getattr(s, key) - row[key]))
    ok = code == 0 and elapsed < 300 and worst <= 1e-12 and rows == 3
    report(capsys, 7, ok, f"fixture R=30 x 3 policies in {elapsed:.0f} s (limit 300); "
                          f"recomputed stats max |diff| {worst:.1e} (tol 1e-12)")


def test_8_metric_correctness(capsys, tmp_path):
    r = bench.rmse([0, 0], [3, 4])
    s = bench.summarize([1, 2, 3, 4])
    bench.write_posterior_1d(tmp_path / "p.csv", [(0, -1.0, 1 / 3, 0.25), (1, 2.0, -1e-10, 0.0)])
    golden = "iteration,x,mean,std\n0,-1,0.333333333,0.25\n1,2,-1e-10,0\n"
    fmt_ok = (tmp_path / "p.csv").read_text() == golden
    ok = abs(r - SQRT_12_5) <= 1e-15 and s.mean == 2.5 and s.median == 2.5 and fmt_ok
    report(capsys, 8, ok, f"rmse([0,0],[3,4])={r!r}, summarize([1,2,3,4]) mean {s.mean} median {s.median}, "
                          f"golden trace format {'matches' if fmt_ok else 'differs'} "
                          "(full golden files in test_bench.py)")


def test_9_determinism(capsys, tmp_path):
    same = []
    for command, extra in (("bench", ["--reps", "3", "--seed", "11"]),
                           ("demo1d", ["--seed", "11", "--budget", "5"])):
        dirs = []
        for k in range(2):
            d = tmp_path / f"{command}{k}"
            with capsys.disabled():
                assert cli.main([command, *extra, "--out", str(d)]) == 0
            dirs.append(d)
        names = ["convergence.csv"] + (["rmse_raw.csv"] if command == "bench" else
                                       [f"{p}/posterior_1d.csv" for p in ("ei", "ucb", "tdue")])
        same += [(dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names]
    report(capsys, 9, all(same), f"{sum(same)}/{len(same)} report files byte-identical across repeated runs")
