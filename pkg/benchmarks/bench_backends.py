"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_backends.py``.  Kernel timings call the
two implementation modules directly; the campaign timing runs one fixture
campaign in a subprocess per backend since the backend is chosen at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tduebo import _pykernels

try:
    from tduebo import _ckernels
except ImportError:
    _ckernels = None

CAMPAIGN = """
import time
from tduebo import data, loop
ds = data.load_csv(data.FIXTURE_CSV, data.load_schema(data.FIXTURE_SCHEMA))
split = data.make_split(ds, data.PROTOCOLS["fixture"], 0)
t = time.perf_counter()
loop.run_campaign(split, loop.CampaignConfig(budget=30, objective="minimize"))
print(time.perf_counter() - t)
"""


def best_of(fn, number, repeat=5):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_cases(n, d, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    resid = rng.standard_normal(n)
    inv_ls = 1.0 / rng.uniform(0.2, 1.0, d)
    mean, std = rng.standard_normal(500), rng.uniform(0, 1, 500)
    return {
        "kernel_matrix": lambda m: m.kernel_matrix(X, X, inv_ls, 1.0, 0),
        "log_marginal_likelihood": lambda m: m.log_marginal_likelihood(X, resid, inv_ls, 1.0, 1e-3, 0),
        "expected_improvement": lambda m: m.expected_improvement(mean, std, 0.3, 0.01),
    }


def campaign_seconds(backend):
    env = dict(os.environ, TDUEBO_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", CAMPAIGN], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="30,60,120", help="comma-separated training-set sizes")
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--skip-campaign", action="store_true")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    print(f"{'operation':<26} {'n':>5} {'python us':>11} {'compiled us':>12} {'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, call in kernel_cases(n, args.dim).items():
            number = max(10, 20000 // n)
            py = best_of(lambda: call(_pykernels), number)
            cy = best_of(lambda: call(_ckernels), number)
            print(f"{name:<26} {n:>5} {py * 1e6:>11.1f} {cy * 1e6:>12.1f} {py / cy:>7.1f}x")
    if not args.skip_campaign:
        py, cy = campaign_seconds("python"), campaign_seconds("compiled")
        print(f"\nfixture campaign (budget 30): python {py:.2f} s, compiled {cy:.2f} s, {py / cy:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
