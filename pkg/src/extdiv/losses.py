"""Poisson data-fidelity terms, their gradients and step-size bounds.

Both fidelities compare the observation ``b`` with the forward prediction
``y = A x + eps`` through the generalized Kullback-Leibler divergence:

* forward KL  ``f(x) = KL(b, y)``  (negative Poisson log-likelihood up to constants),
* reverse KL  ``f(x) = KL(y, b)``.

A small constant (:data:`LOG_FLOOR`) is added to ``b`` and to ``y`` before
any logarithm or division, so zero counts never produce infinities.
"""
from __future__ import annotations

import enum
from typing import Callable, Optional, Tuple

import numpy as np

from .entropy import LegendreKind, as_vec
from .errors import DomainError, ParamError, SizeError

__all__ = [
    "LOG_FLOOR",
    "FidelityKind",
    "LinearOperator",
    "DenseOperator",
    "MatrixFreeOperator",
    "PoissonModel",
    "fidelity_value",
    "fidelity_grad",
    "step_bound",
]

LOG_FLOOR = 1e-12


class FidelityKind(enum.Enum):
    FORWARD_KL = "forward-kl"
    REVERSE_KL = "reverse-kl"

    @property
    def entropy(self) -> LegendreKind:
        """Kernel paired with this fidelity by the solver."""
        if self is FidelityKind.FORWARD_KL:
            return LegendreKind.BURG
        return LegendreKind.BOLTZMANN_SHANNON


class LinearOperator:
    """Minimal linear-operator interface: shape, apply and adjoint."""

    shape: Tuple[int, int]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def column_sums(self) -> np.ndarray:
        return self.rmatvec(np.ones(self.shape[0]))


class DenseOperator(LinearOperator):
    """Explicit (m, n) matrix, stored C-contiguous."""

    def __init__(self, matrix):
        a = np.ascontiguousarray(matrix, dtype=np.float64)
        if a.ndim != 2 or a.size == 0:
            raise SizeError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
        self.matrix = a
        self.shape = a.shape

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, y):
        return self.matrix.T @ y

    def column_sums(self):
        return self.matrix.sum(axis=0)


class MatrixFreeOperator(LinearOperator):
    """Operator given by a pair of callables ``apply`` / ``adjoint``."""

    def __init__(self, shape, apply: Callable, adjoint: Callable):
        self.shape = (int(shape[0]), int(shape[1]))
        self._apply = apply
        self._adjoint = adjoint

    def matvec(self, x):
        return np.asarray(self._apply(x), dtype=np.float64)

    def rmatvec(self, y):
        return np.asarray(self._adjoint(y), dtype=np.float64)


def _as_operator(A) -> LinearOperator:
    return A if isinstance(A, LinearOperator) else DenseOperator(A)


class PoissonModel:
    """Observation model ``b ~ Poisson(A x + eps)``.

    Parameters
    ----------
    A : array_like or LinearOperator
        Nonnegative (m, n) forward operator without zero columns.
    b : array_like
        Observed counts, length m.
    background : array_like, optional
        Background ``eps`` (default zeros).
    include_background : bool
        When False the fidelity uses ``A x`` instead of ``A x + eps``.
    """

    def __init__(self, A, b, background=None, include_background: bool = True):
        self.A = _as_operator(A)
        m, n = self.A.shape
        self.b = as_vec(b, "b")
        if self.b.shape != (m,):
            raise SizeError(f"b has length {self.b.size}, operator has {m} rows")
        if background is None:
            background = np.zeros(m)
        self.background = as_vec(background, "background")
        if self.background.shape != (m,):
            raise SizeError(f"background has length {self.background.size}, expected {m}")
        if np.any(self.b < 0.0) or np.any(self.background < 0.0):
            raise DomainError("observations and background must be nonnegative")
        if isinstance(self.A, DenseOperator):
            if not np.all(np.isfinite(self.A.matrix)) or np.any(self.A.matrix < 0.0):
                raise DomainError("forward matrix must be finite and nonnegative")
        colsum = self.A.column_sums()
        if np.any(colsum <= 0.0):
            raise DomainError(f"forward operator has {int(np.sum(colsum <= 0))} zero column(s)")
        self._colsum = colsum
        self.include_background = bool(include_background)

    @property
    def shape(self):
        return self.A.shape

    @property
    def effective_background(self) -> np.ndarray:
        """Background actually added to ``A x`` inside the fidelity."""
        return self.background if self.include_background else np.zeros_like(self.background)

    @property
    def column_sums(self) -> np.ndarray:
        return self._colsum

    def predict(self, x) -> np.ndarray:
        return self.A.matvec(x) + self.effective_background


def _floored(model: PoissonModel, x) -> Tuple[np.ndarray, np.ndarray]:
    x = as_vec(x)
    if x.shape != (model.shape[1],):
        raise SizeError(f"x has length {x.size}, operator has {model.shape[1]} columns")
    if np.any(x <= 0.0):
        raise DomainError("fidelity is evaluated on strictly positive x")
    y = model.predict(x) + LOG_FLOOR
    return y, model.b + LOG_FLOOR


def fidelity_value(kind: FidelityKind, model: PoissonModel, x) -> float:
    y, bt = _floored(model, x)
    if kind is FidelityKind.FORWARD_KL:
        terms = bt * np.log(bt / y) - bt + y
    else:
        terms = y * np.log(y / bt) - y + bt
    return float(max(np.sum(terms), 0.0))


def fidelity_grad(kind: FidelityKind, model: PoissonModel, x) -> np.ndarray:
    y, bt = _floored(model, x)
    if kind is FidelityKind.FORWARD_KL:
        return model.A.rmatvec(1.0 - bt / y)
    return model.A.rmatvec(np.log(y / bt))


def step_bound(kind: FidelityKind, model: PoissonModel, override: Optional[float] = None) -> float:
    """Largest step size covered by the relative-smoothness constant.

    Forward KL with the Burg kernel: ``1 / ||b||_1``. Reverse KL with the
    Boltzmann-Shannon kernel: ``1 / max_j sum_i A_ij`` (a conservative
    surrogate). `override` replaces the reverse-KL constant.
    """
    if kind is FidelityKind.FORWARD_KL:
        total = float(np.sum(model.b))
        if total <= 0.0:
            raise ParamError("forward-KL step bound is undefined for an all-zero observation")
        return 1.0 / total
    if override is not None:
        if not override > 0:
            raise ParamError("smoothness constant override must be positive")
        return 1.0 / float(override)
    return 1.0 / float(np.max(model.column_sums))
