"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from uegroup.kernels import available_backends


def _adam_case(n):
    rng = np.random.default_rng(0)
    p, g = rng.standard_normal(n), rng.standard_normal(n)
    m, v = np.zeros(n), np.zeros(n)

    def run(mod):
        mod.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)

    return run


def _dbscan_case(n, d):
    X = np.ascontiguousarray(np.random.default_rng(1).random((n, d)))
    return lambda mod: mod.dbscan_labels(X, 0.15, 1)


def _ward_case(n, d):
    X = np.ascontiguousarray(np.random.default_rng(2).random((n, d)))
    return lambda mod: mod.ward_linkage(X)


CASES = {
    # the positioning net has ~1.2M parameters
    "adam_update n=1.2M": _adam_case(1_230_148),
    "dbscan_labels n=200 d=4": _dbscan_case(200, 4),
    "ward_linkage n=8 d=4": _ward_case(8, 4),
    "ward_linkage n=50 d=4": _ward_case(50, 4),
    "ward_linkage n=200 d=2": _ward_case(200, 2),
}


def bench(repeat: int) -> list[dict]:
    backends = available_backends()
    results = []
    for name, case in CASES.items():
        row = {"case": name}
        for label, mod in backends.items():
            timer = timeit.Timer(lambda: case(mod))
            number, _ = timer.autorange()
            row[label] = min(timer.repeat(repeat, number)) / number
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)
    return results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    results = bench(args.repeat)
    if "cython" not in available_backends():
        print("compiled backend not built; timing the Python fallback only", file=sys.stderr)
    print(f"{'case':<26}{'python':>12}{'cython':>12}{'speedup':>10}")
    for r in results:
        cy = f"{r['cython'] * 1e3:10.3f}ms" if "cython" in r else f"{'-':>12}"
        sp = f"{r['speedup']:9.1f}x" if "speedup" in r else f"{'-':>10}"
        print(f"{r['case']:<26}{r['python'] * 1e3:10.3f}ms{cy}{sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
