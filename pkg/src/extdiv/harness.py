"""Synthetic sparse-Poisson benchmark: data generation, metrics, grid search.

Randomness is organised by :class:`numpy.random.SeedSequence` spawn keys:
trial ``t`` draws its sensing matrix, ground truth and noise from the
streams ``(t, 0)``, ``(t, 1)`` and ``(t, 2)`` of the run seed. Adding trials
therefore never changes earlier ones, and the matrix of a trial is shared
across sparsity levels.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ExtDivError, ParamError
from .losses import PoissonModel, step_bound
from .shrinkage import validate_ext_div_params
from .solver import SolverConfig, Trace, Variant, solve

log = logging.getLogger(__name__)

__all__ = [
    "SyntheticSpec",
    "TrialResult",
    "GridPoint",
    "trial_rng",
    "gen_sensing_matrix",
    "gen_ground_truth",
    "sample_poisson",
    "nmse",
    "default_grids",
    "make_trial",
    "run_benchmark",
    "worker_count",
    "write_bench_csv",
    "write_trace_csv",
    "BENCH_HEADER",
    "TRACE_HEADER",
]

BENCH_HEADER = ["trial", "method", "rho", "m", "n", "lambda", "omega", "eta1", "a",
                "eta", "nmse", "iters", "converged"]
TRACE_HEADER = ["iter", "delta_norm", "fidelity", "nmse"]

_MATRIX, _TRUTH, _NOISE = 0, 1, 2


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n: int
    rho: float
    k_max: float = 300.0
    seed: int = 0
    trials: int = 50
    background: float = 1.0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ParamError("m and n must be positive")
        if not 0 < self.rho <= 1:
            raise ParamError("rho must lie in (0, 1]")
        if round(self.rho * self.n) < 1:
            raise ParamError("rho * n rounds to an empty support")
        if not self.k_max > 0 or self.trials < 1:
            raise ParamError("k_max and trials must be positive")


@dataclasses.dataclass(frozen=True)
class GridPoint:
    """One hyperparameter setting; ``lam_factor`` multiplies the step bound."""

    lam_factor: float
    eta: float = 0.0
    omega: float = math.nan
    eta1: float = math.nan
    a: float = math.nan


@dataclasses.dataclass
class TrialResult:
    trial: int
    method: Variant
    rho: float
    m: int
    n: int
    nmse: float
    iterations_used: int
    converged: bool
    hyperparams: Dict[str, float]
    grid_nmse: Sequence[float] = ()


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.default_rng(ss)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_sensing_matrix(m: int, n: int, seed) -> np.ndarray:
    """IID entries equal to 0 or 1/m with probability 1/2 each.

    All-zero columns are redrawn so every unknown is observed.
    """
    rng = _rng(seed)
    A = (rng.random((m, n)) < 0.5).astype(np.float64)
    redraws = 0
    while True:
        empty = np.flatnonzero(~A.any(axis=0))
        if empty.size == 0:
            break
        redraws += empty.size
        A[:, empty] = rng.random((m, empty.size)) < 0.5
    if redraws:
        log.info("redrew %d all-zero column(s) of a %dx%d sensing matrix", redraws, m, n)
    return A / m


def gen_ground_truth(n: int, rho: float, k_max: float, seed) -> np.ndarray:
    """Sparse vector with round(rho n) entries uniform on [0, k_max] at random positions."""
    rng = _rng(seed)
    s = int(round(rho * n))
    if s < 1:
        raise ParamError("support size rounds to zero")
    x = np.zeros(n)
    x[rng.choice(n, size=s, replace=False)] = rng.uniform(0.0, k_max, size=s)
    return x


def sample_poisson(mean, seed) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    if np.any(mean < 0) or not np.all(np.isfinite(mean)):
        raise ParamError("Poisson means must be finite and nonnegative")
    return _rng(seed).poisson(mean).astype(np.float64)


def nmse(estimate, truth) -> float:
    """||estimate - truth|| / ||truth||."""
    t = np.asarray(truth, dtype=np.float64)
    tn = float(np.linalg.norm(t))
    if tn == 0.0:
        raise ParamError("NMSE is undefined for a zero ground truth")
    return float(np.linalg.norm(np.asarray(estimate, dtype=np.float64) - t)) / tn


def make_trial(spec: SyntheticSpec, trial: int):
    """(A, x_true, b) for one trial of `spec`."""
    A = gen_sensing_matrix(spec.m, spec.n, trial_rng(spec.seed, trial, _MATRIX))
    x = gen_ground_truth(spec.n, spec.rho, spec.k_max, trial_rng(spec.seed, trial, _TRUTH))
    b = sample_poisson(A @ x + spec.background, trial_rng(spec.seed, trial, _NOISE))
    return A, x, b


def default_grids(preset: str = "desk") -> Dict[Variant, List[GridPoint]]:
    """Hyperparameter grids per method.

    ``"desk"`` is sized so the full six-cell, 50-trial comparison runs in
    about 20 minutes on one core. ``"wide"`` is a larger sweep; its
    external-division points that are not order preserving are kept and
    simply scored as failures.
    """
    if preset == "desk":
        lams = (0.5, 1.0)
        etas = tuple(float(v) for v in np.logspace(-3, 1, 9))
        fkl_lams, fkl_etas = (1.0,), (1e-3, 1e-2, 1e-1)
        omegas, fracs, avals = (1.5, 2.0, 4.0, 8.0), (0.1, 0.4), (1.0, 3.0, 10.0, 30.0)
    elif preset == "wide":
        lams = (0.1, 0.3, 0.5, 0.9, 1.0)
        etas = tuple(float(v) for v in np.logspace(-3, 1, 9))
        fkl_lams, fkl_etas = lams, etas
        omegas, fracs = (1.5, 2.0, 4.0, 8.0), (0.1, 0.25, 0.4, 0.5, 0.7, 0.9)
        avals = (0.01, 0.05, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0)
    else:
        raise ParamError(f"unknown grid preset {preset!r}")
    grids = {
        Variant.FKL_L1: [GridPoint(l, e) for l in fkl_lams for e in fkl_etas],
        Variant.RKL_L1: [GridPoint(l, e) for l in lams for e in etas],
        Variant.PROPOSED_A0: [GridPoint(l) for l in lams],
        Variant.PROPOSED: [],
    }
    for l in lams:
        for w in omegas:
            for f in fracs:
                eta1 = f * math.log(w)
                if preset == "desk" and not validate_ext_div_params(w, eta1, 1.0).order_preserving:
                    continue
                for a in avals:
                    grids[Variant.PROPOSED].append(GridPoint(l, 0.0, w, eta1, a))
    return grids


def _config(method: Variant, point: GridPoint, bound: float, max_iter, tol) -> SolverConfig:
    ext = None
    if method is Variant.PROPOSED:
        ext = validate_ext_div_params(point.omega, point.eta1, point.a)
    return SolverConfig(method, lam=point.lam_factor * bound, max_iter=max_iter, tol=tol,
                        l1_weight=point.eta, ext_div=ext, trace_every=1 << 30)


def _hyper(method: Variant, point: GridPoint, bound: float) -> Dict[str, float]:
    hp = {"lambda": point.lam_factor * bound, "omega": math.nan, "eta1": math.nan,
          "a": math.nan, "eta": math.nan}
    if method is Variant.PROPOSED:
        hp.update(omega=point.omega, eta1=point.eta1, a=point.a)
    elif method in (Variant.FKL_L1, Variant.RKL_L1):
        hp["eta"] = point.eta
    return hp


def _run_trial(spec: SyntheticSpec, trial: int, methods, grids, budgets, tol):
    A, x_true, b = make_trial(spec, trial)
    model = PoissonModel(A, b, np.full(spec.m, spec.background))
    out = []
    for method in methods:
        bound = step_bound(method.fidelity, model)
        scores, runs = [], []
        for point in grids[method]:
            try:
                res = solve(_config(method, point, bound, budgets.get(method), tol), model)
                score = nmse(res.x, x_true)
            except ExtDivError as exc:
                log.debug("grid point %s failed for %s: %s", point, method.value, exc)
                res, score = None, math.inf
            scores.append(score)
            runs.append(res)
        best = int(np.argmin(scores))
        res = runs[best]
        out.append(TrialResult(
            trial=trial, method=method, rho=spec.rho, m=spec.m, n=spec.n,
            nmse=scores[best], iterations_used=res.iterations if res else 0,
            converged=bool(res and res.converged),
            hyperparams=_hyper(method, grids[method][best], bound), grid_nmse=tuple(scores)))
    return out


def worker_count() -> int:
    env = os.environ.get("EXTDIV_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_benchmark(spec: SyntheticSpec, methods: Iterable[Variant],
                  grids: Optional[Mapping[Variant, Sequence[GridPoint]]] = None,
                  budgets: Optional[Mapping[Variant, int]] = None, tol: float = 1e-4,
                  workers: Optional[int] = None) -> List[TrialResult]:
    """Best-of-grid NMSE per (trial, method), sorted by trial then method order.

    `budgets` maps a method to its iteration budget (solver defaults
    otherwise). Grid points that raise a library error score ``inf``.
    """
    methods = [Variant(mth) for mth in methods]
    grids = dict(default_grids() if grids is None else grids)
    for mth in methods:
        if not grids.get(mth):
            raise ParamError(f"empty grid for method {mth.value}")
    budgets = dict(budgets or {})
    nw = worker_count() if workers is None else max(1, int(workers))
    trials = range(spec.trials)
    if nw == 1:
        chunks = [_run_trial(spec, t, methods, grids, budgets, tol) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            chunks = list(pool.map(lambda t: _run_trial(spec, t, methods, grids, budgets, tol), trials))
    return [r for chunk in chunks for r in chunk]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_bench_csv(results: Iterable[TrialResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in results:
            hp = r.hyperparams
            w.writerow([_fmt(v) for v in (
                r.trial, r.method.value, float(r.rho), r.m, r.n, float(hp["lambda"]),
                float(hp["omega"]), float(hp["eta1"]), float(hp["a"]), float(hp["eta"]),
                float(r.nmse), r.iterations_used, r.converged)])


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, d, f, e in zip(trace.iteration, trace.delta_norm, trace.fidelity, trace.nmse):
            w.writerow([int(it), _fmt(float(d)), _fmt(float(f)), _fmt(float(e))])
