"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Reports the best wall time over N repeats for a fixed-budget solve on each
variant, plus the elementwise external-division map, and the speedup.
"""
import argparse
import timeit

import numpy as np

from extdiv import PoissonModel, SolverConfig, Variant, solve, step_bound, validate_ext_div_params
from extdiv import _core_py
from extdiv.harness import SyntheticSpec, make_trial

try:
    from extdiv import _core
except ImportError:
    _core = None


def solver_case(variant, m, n, iters):
    spec = SyntheticSpec(m, n, 0.1, k_max=300.0, seed=0, trials=1)
    A, _, b = make_trial(spec, 0)
    model = PoissonModel(A, b, np.ones(m))
    # tol=1e-300 keeps every run at the full budget
    cfg = SolverConfig(variant, lam=step_bound(variant.fidelity, model), l1_weight=0.01,
                       ext_div=validate_ext_div_params(2.0, 0.25, 3.0), max_iter=iters,
                       tol=1e-300, trace_every=iters)
    return lambda backend: solve(cfg, model, backend=backend)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")

    rows = []
    for m, n in ((100, 150), (150, 100)):
        for v in Variant:
            run = solver_case(v, m, n, 2000)
            t_c = min(timeit.repeat(lambda: run(_core), number=1, repeat=args.repeat))
            t_p = min(timeit.repeat(lambda: run(_core_py), number=1, repeat=args.repeat))
            rows.append((f"solve {v.value} {m}x{n} 2000 it", t_c, t_p))

    x = np.random.default_rng(0).uniform(0, 12, 1_000_000)
    t_c = min(timeit.repeat(lambda: _core.ext_div(x, 2.0, 0.25, 3.0), number=1, repeat=args.repeat))
    t_p = min(timeit.repeat(lambda: _core_py.ext_div(x, 2.0, 0.25, 3.0), number=1, repeat=args.repeat))
    rows.append(("ext_div 1e6 points", t_c, t_p))

    print(f"{'case':<34} {'compiled s':>11} {'numpy s':>10} {'speedup':>8}")
    for name, c, p in rows:
        print(f"{name:<34} {c:>11.4f} {p:>10.4f} {p / c:>7.1f}x")


if __name__ == "__main__":
    main()
