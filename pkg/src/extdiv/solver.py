"""NoLips (Bregman proximal gradient) solver.

One iteration is a mirror step followed by a backward step::

    z      = grad_h_conj(grad_h(x) - lam * grad_f(x))
    x_next = backward(z)

Four variants are provided; the pairing of fidelity and kernel is fixed:

============  ============  ================  ==============================
variant       fidelity      kernel h          backward step
============  ============  ================  ==============================
FKL_L1        forward KL    Burg              Burg prox of lam*eta*||.||_1
RKL_L1        reverse KL    Boltzmann-Shannon multiplicative shrink e^-lam*eta
PROPOSED      reverse KL    Boltzmann-Shannon external-division operator
PROPOSED_A0   reverse KL    Boltzmann-Shannon identity
============  ============  ================  ==============================

The iteration itself runs in :mod:`extdiv._core` (or its numpy twin);
:func:`mirror_step` and :func:`backward_step` are the readable reference
versions used for testing and for one-off calls.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from typing import Iterator, Optional

import numpy as np

from . import _core_py
from ._backend import kernels
from .entropy import LegendreKind, as_vec, grad_h, grad_h_conj
from .errors import DomainError, ParamError, StepError
from .losses import LOG_FLOOR, DenseOperator, FidelityKind, PoissonModel, step_bound
from .shrinkage import ExtDivParams, bregman_prox_l1_bs, bregman_prox_l1_burg, ext_div_closed_form

__all__ = [
    "Variant",
    "SolverConfig",
    "IterateTrace",
    "Trace",
    "SolveResult",
    "mirror_step",
    "backward_step",
    "solve",
    "default_max_iter",
    "ITERATE_FLOOR",
]

# Boltzmann-Shannon iterates are kept >= this value so they stay strictly
# positive and never become subnormal (subnormal arithmetic is ~20x slower)
ITERATE_FLOOR = 1e-250
MAX_HALVINGS = 30


class Variant(enum.Enum):
    FKL_L1 = "fkl"
    RKL_L1 = "rkl"
    PROPOSED = "proposed"
    PROPOSED_A0 = "proposed-a0"

    @property
    def fidelity(self) -> FidelityKind:
        return FidelityKind.FORWARD_KL if self is Variant.FKL_L1 else FidelityKind.REVERSE_KL

    @property
    def entropy(self) -> LegendreKind:
        return self.fidelity.entropy

    @property
    def code(self) -> int:
        return {
            Variant.FKL_L1: _core_py.FKL_L1,
            Variant.RKL_L1: _core_py.RKL_L1,
            Variant.PROPOSED: _core_py.PROPOSED,
            Variant.PROPOSED_A0: _core_py.IDENTITY,
        }[self]


def default_max_iter(variant: Variant) -> int:
    return 5_000_000 if variant is Variant.FKL_L1 else 10_000


@dataclasses.dataclass
class SolverConfig:
    """Run configuration.

    ``max_iter=None`` selects the variant's default budget. ``x0=None``
    starts from the all-ones vector. ``lam`` may exceed the step bound only
    with ``allow_large_step=True``.
    """

    variant: Variant
    lam: float
    max_iter: Optional[int] = None
    tol: float = 1e-4
    l1_weight: float = 0.0
    ext_div: Optional[ExtDivParams] = None
    x0: Optional[np.ndarray] = None
    trace_every: int = 1
    allow_large_step: bool = False
    step_override: Optional[float] = None

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.max_iter is None:
            self.max_iter = default_max_iter(self.variant)

    def validate(self, model: PoissonModel) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParamError(f"step size must be positive, got {self.lam}")
        if int(self.max_iter) < 1 or int(self.trace_every) < 1:
            raise ParamError("max_iter and trace_every must be positive integers")
        if not self.tol > 0:
            raise ParamError("tol must be positive")
        if not (math.isfinite(self.l1_weight) and self.l1_weight >= 0):
            raise ParamError("l1 weight must be nonnegative")
        if self.variant is Variant.PROPOSED:
            if self.ext_div is None:
                raise ParamError("the proposed variant needs external-division parameters")
            if self.ext_div.a > 0 and not self.ext_div.order_preserving:
                raise ParamError(
                    "external-division parameters give a negative slope near the origin "
                    f"(omega={self.ext_div.omega}, eta1={self.ext_div.eta1}); "
                    "lower eta1 or raise omega")
        if self.x0 is not None:
            x0 = as_vec(self.x0, "x0")
            if x0.shape != (model.shape[1],):
                raise ParamError(f"x0 has length {x0.size}, expected {model.shape[1]}")
            if np.any(x0 <= 0):
                raise ParamError("x0 must be strictly positive")
        if not self.allow_large_step:
            bound = step_bound(self.variant.fidelity, model, self.step_override)
            if self.lam > bound * (1.0 + 1e-12):
                raise ParamError(
                    f"step size {self.lam:.6g} exceeds the bound {bound:.6g}; "
                    "set allow_large_step to explore beyond it")

    def initial_point(self, n: int) -> np.ndarray:
        return np.ones(n) if self.x0 is None else np.array(self.x0, dtype=np.float64)


@dataclasses.dataclass(frozen=True)
class IterateTrace:
    iteration: int
    delta_norm: float
    fidelity: float
    nmse: Optional[float]
    elapsed: float


class Trace:
    """Column-oriented store of :class:`IterateTrace` records.

    Record ``k`` holds the step length ``||x_{k+1} - x_k||``, ``f(x_k)`` and
    the NMSE of ``x_k``. Indexing and iteration yield :class:`IterateTrace`.
    """

    def __init__(self, iteration, delta_norm, fidelity, nmse, elapsed):
        self.iteration = np.asarray(iteration, dtype=np.int64)
        self.delta_norm = np.asarray(delta_norm, dtype=np.float64)
        self.fidelity = np.asarray(fidelity, dtype=np.float64)
        self.nmse = np.asarray(nmse, dtype=np.float64)
        self.elapsed = np.asarray(elapsed, dtype=np.float64)

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        if not parts:
            return cls([], [], [], [], [])
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("iteration", "delta_norm", "fidelity", "nmse", "elapsed")))

    def __len__(self):
        return int(self.iteration.size)

    def __getitem__(self, i) -> IterateTrace:
        nm = float(self.nmse[i])
        return IterateTrace(int(self.iteration[i]), float(self.delta_norm[i]),
                            float(self.fidelity[i]), None if math.isnan(nm) else nm,
                            float(self.elapsed[i]))

    def __iter__(self) -> Iterator[IterateTrace]:
        return (self[i] for i in range(len(self)))


@dataclasses.dataclass
class SolveResult:
    x: np.ndarray
    trace: Trace
    iterations: int
    converged: bool
    lam_used: float
    halvings: int
    best_nmse: Optional[float] = None
    best_x: Optional[np.ndarray] = None

    def __iter__(self):
        # allows ``x, trace = solve(...)``
        yield self.x
        yield self.trace


def mirror_step(x, lam, kind: LegendreKind, grad_f) -> np.ndarray:
    """grad_h_conj(grad_h(x) - lam * grad_f)."""
    u = grad_h(kind, x) - float(lam) * as_vec(grad_f, "grad_f")
    if kind is LegendreKind.BURG and np.any(u >= 0.0):
        raise StepError("dual point left the Burg dual domain; reduce the step size")
    return grad_h_conj(kind, u)


def backward_step(variant: Variant, point, config: SolverConfig) -> np.ndarray:
    variant = Variant(variant)
    point = as_vec(point, "point")
    if variant is Variant.PROPOSED_A0:
        return point.copy()
    if variant is Variant.PROPOSED:
        if config.ext_div is None:
            raise ParamError("the proposed variant needs external-division parameters")
        return ext_div_closed_form(point, config.ext_div)
    idx = config.lam * config.l1_weight
    if variant is Variant.FKL_L1:
        return bregman_prox_l1_burg(point, idx)
    return bregman_prox_l1_bs(point, idx)


def _kernel_params(config: SolverConfig):
    p = config.ext_div
    if config.variant is Variant.PROPOSED and p is not None and p.a > 0:
        return p.omega, p.eta1, p.a
    return 0.0, 0.0, 0.0


def solve(config: SolverConfig, model: PoissonModel, ground_truth=None,
          backend=None) -> SolveResult:
    """Run NoLips until ``||x_{k+1} - x_k|| <= tol`` or ``max_iter`` iterations.

    A forward-KL step that leaves the Burg dual domain is retried from the
    last valid iterate with half the step size, at most 30 times; the
    iteration counter keeps running across retries.
    """
    config.validate(model)
    m, n = model.shape
    truth = None if ground_truth is None else as_vec(ground_truth, "ground_truth")
    if truth is not None and (truth.shape != (n,) or not np.any(truth)):
        raise ParamError("ground truth must be a nonzero vector of length n")
    mod = kernels if backend is None else backend
    omega, eta1, a = _kernel_params(config)
    dense = isinstance(model.A, DenseOperator)

    x = config.initial_point(n)
    lam = float(config.lam)
    k = 0
    parts = []
    halvings = 0
    best_nmse, best_x = math.inf, None
    t_offset = 0.0
    while True:
        args = (model.b, model.effective_background, x, config.variant.code, lam,
                config.l1_weight, omega, eta1, a, int(config.max_iter), float(config.tol))
        kw = dict(start_iter=k, trace_every=int(config.trace_every), truth=truth,
                  log_floor=LOG_FLOOR, iterate_floor=ITERATE_FLOOR)
        if dense:
            out = mod.nolips_dense(model.A.matrix, *args, **kw)
        else:
            out = _core_py.nolips(model.A.matvec, model.A.rmatvec, *args, **kw)
        x, k, status, tr, bn, bx = out
        seg = Trace(*tr)
        seg.elapsed = seg.elapsed + t_offset
        if len(seg):
            t_offset = float(seg.elapsed[-1])
        parts.append(seg)
        if truth is not None and bn < best_nmse:
            best_nmse, best_x = float(bn), np.array(bx)
        if status != _core_py.STEP_FAILED:
            break
        if halvings >= MAX_HALVINGS:
            raise StepError(f"step failed after {MAX_HALVINGS} halvings (last step {lam:.3g})")
        halvings += 1
        lam *= 0.5
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite iterate")
    return SolveResult(
        x=x, trace=Trace.concat(parts), iterations=int(k),
        converged=status == _core_py.CONVERGED, lam_used=lam, halvings=halvings,
        best_nmse=best_nmse if truth is not None else None, best_x=best_x)
