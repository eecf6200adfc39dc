"""Time the compiled kernels against their numpy twins and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from emoclass import kernels
from emoclass.classical import kernel_matrix


def _best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def gini_case(n, d, seed=0):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.integers(0, 5, size=(n, d)).astype(np.float64))
    y = np.ascontiguousarray(rng.integers(0, 4, size=n).astype(np.int64))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").astype(np.int64))
    return lambda backend: backend.gini_scan(X, order, y, 4, 1, 1e-12)


def smo_case(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 10))
    t = np.where(X[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    Q = np.ascontiguousarray(t[:, None] * t[None, :] * kernel_matrix(X, X, "rbf", 0.1))
    return lambda backend: backend.smo_solve(Q, t, 1.0, 1e-3, 10_000_000)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    py = kernels.python_backend
    try:
        from emoclass import _ckernels as cy
    except ImportError:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return 1
    cases = [("gini_scan n=200 d=50", gini_case(200, 50)),
             ("gini_scan n=2000 d=100", gini_case(2000, 100)),
             ("smo_solve n=300 rbf", smo_case(300)),
             ("smo_solve n=1000 rbf", smo_case(1000))]
    rows = []
    print(f"{'case':<24}{'python s':>12}{'compiled s':>12}{'speedup':>10}  agree")
    for name, run in cases:
        tp, op = _best_time(lambda: run(py), args.repeat)
        tc, oc = _best_time(lambda: run(cy), args.repeat)
        if name.startswith("gini"):
            agree = op[0] == oc[0] and op[1] == oc[1] and abs(op[2] - oc[2]) <= 1e-12 * max(1.0, abs(op[2]))
        else:
            agree = np.array_equal(op[0], oc[0]) and abs(op[1] - oc[1]) <= 1e-12 and op[2] == oc[2]
        rows.append({"case": name, "python_s": tp, "compiled_s": tc, "speedup": tp / tc, "agree": bool(agree)})
        print(f"{name:<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x  {'yes' if agree else 'NO'}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
