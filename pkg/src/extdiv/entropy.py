"""Legendre entropies, their mirror maps and Bregman divergences.

Three kernels are supported:

``BOLTZMANN_SHANNON``
    h(x) = sum x_i log x_i on the nonnegative orthant (0 log 0 = 0).
``BURG``
    h(x) = -sum log x_i on the strictly positive orthant.
``HALVED_SQUARED_EUCLIDEAN``
    h(x) = ||x||^2 / 2 on all of R^n.

All functions accept anything :func:`numpy.asarray` understands and return
float64 arrays (or floats for scalar-valued quantities).
"""
from __future__ import annotations

import enum

import numpy as np

from .errors import DomainError

__all__ = [
    "LegendreKind",
    "as_vec",
    "entropy_value",
    "grad_h",
    "grad_h_conj",
    "bregman_div",
]


class LegendreKind(enum.Enum):
    BOLTZMANN_SHANNON = "boltzmann-shannon"
    BURG = "burg"
    HALVED_SQUARED_EUCLIDEAN = "euclidean"


def as_vec(x, name="x"):
    """Return `x` as a finite, non-empty 1-D float64 array."""
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise DomainError(f"{name} must be a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite entries")
    return v


def _require_positive(x, what):
    if np.any(x <= 0.0):
        raise DomainError(f"{what} requires strictly positive coordinates")


def _xlogx(x):
    # exact 0 log 0 = 0, no epsilon
    out = np.zeros_like(x)
    pos = x > 0.0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy_value(kind: LegendreKind, x) -> float:
    """Evaluate h(x) on the closed domain of `kind`."""
    x = as_vec(x)
    if kind is LegendreKind.BOLTZMANN_SHANNON:
        if np.any(x < 0.0):
            raise DomainError("Boltzmann-Shannon entropy is defined on the nonnegative orthant")
        return float(np.sum(_xlogx(x)))
    if kind is LegendreKind.BURG:
        _require_positive(x, "Burg entropy")
        return float(-np.sum(np.log(x)))
    return float(0.5 * np.dot(x, x))


def grad_h(kind: LegendreKind, x) -> np.ndarray:
    """Mirror map: primal interior -> dual interior."""
    x = as_vec(x)
    if kind is LegendreKind.BOLTZMANN_SHANNON:
        _require_positive(x, "Boltzmann-Shannon mirror map")
        return np.log(x) + 1.0
    if kind is LegendreKind.BURG:
        _require_positive(x, "Burg mirror map")
        return -1.0 / x
    return x.copy()


def grad_h_conj(kind: LegendreKind, u) -> np.ndarray:
    """Inverse mirror map: dual interior -> primal interior."""
    u = as_vec(u, "u")
    if kind is LegendreKind.BOLTZMANN_SHANNON:
        return np.exp(u - 1.0)
    if kind is LegendreKind.BURG:
        if np.any(u >= 0.0):
            raise DomainError("Burg conjugate mirror map requires strictly negative coordinates")
        return -1.0 / u
    return u.copy()


def bregman_div(kind: LegendreKind, xi, x) -> float:
    """D_h(xi, x) = h(xi) - h(x) - <grad h(x), xi - x>.

    `xi` may sit on the boundary of the domain (zeros are allowed for the
    Boltzmann-Shannon kernel), `x` must be interior.
    """
    xi = as_vec(xi, "xi")
    x = as_vec(x)
    if xi.shape != x.shape:
        raise DomainError(f"shape mismatch {xi.shape} vs {x.shape}")
    if kind is LegendreKind.BOLTZMANN_SHANNON:
        if np.any(xi < 0.0):
            raise DomainError("xi must be nonnegative for the Boltzmann-Shannon divergence")
        _require_positive(x, "Boltzmann-Shannon divergence (second argument)")
        # generalized KL, summed termwise to avoid cancellation between h(xi) and h(x)
        terms = _xlogx(xi) - xi * np.log(x) - xi + x
        return float(max(np.sum(terms), 0.0))
    if kind is LegendreKind.BURG:
        _require_positive(xi, "Burg divergence")
        _require_positive(x, "Burg divergence")
        r = xi / x
        return float(max(np.sum(r - np.log(r) - 1.0), 0.0))
    d = xi - x
    return float(0.5 * np.dot(d, d))
