"""Backward-step operators.

Euclidean shrinkage (soft, firm and firm written as an external division of
two soft operators), Bregman proximity operators of the (shifted) l1 norm for
the Boltzmann-Shannon and Burg kernels, and the external division of two
Boltzmann-Shannon Bregman proximity operators in three equivalent forms:

* :func:`ext_div_closed_form` -- five-branch piecewise-linear map (production),
* :func:`ext_div_composed` -- affine combination of two mirror-conjugated
  shifted soft-thresholdings,
* :func:`dual_correction_S` -- scalar dual-space map S with
  ``T(x)_i = grad_h_conj(S(grad_h(x_i)))``.

Every operator acts coordinate-wise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .entropy import LegendreKind, as_vec, grad_h, grad_h_conj
from .errors import DomainError, ParamError

__all__ = [
    "ExtDivParams",
    "validate_ext_div_params",
    "soft",
    "firm",
    "external_division_euclidean",
    "shifted_soft",
    "bregman_prox_shifted_l1_bs",
    "bregman_prox_l1_bs",
    "bregman_prox_l1_burg",
    "ext_div_closed_form",
    "ext_div_composed",
    "dual_correction_S",
]

_BS = LegendreKind.BOLTZMANN_SHANNON


@dataclass(frozen=True)
class ExtDivParams:
    """Validated parameters of the external-division operator.

    Build instances with :func:`validate_ext_div_params` (or
    :meth:`ExtDivParams.create`); the derived fields are filled in there.
    """

    omega: float
    eta1: float
    a: float
    kappa: float
    eta2: float
    a_tilde: Optional[float]

    @classmethod
    def create(cls, omega, eta1, a):
        return validate_ext_div_params(omega, eta1, a)

    @property
    def first_slope(self) -> float:
        """Slope of the branch through the origin, omega e^eta1 - (omega-1) kappa."""
        return self.omega * math.exp(self.eta1) - (self.omega - 1.0) * self.kappa

    @property
    def order_preserving(self) -> bool:
        """True when every branch slope is nonnegative.

        Only the first slope can be negative; that happens for
        ``exp(-eta1) < omega / (2 omega - 1)`` and makes the operator
        send small positive inputs to negative values.
        """
        return self.first_slope >= 0.0

    @property
    def breakpoints(self):
        """(a/kappa, a e^-eta1, a e^eta1, a kappa)."""
        a = self.a
        return (a / self.kappa, a * math.exp(-self.eta1), a * math.exp(self.eta1), a * self.kappa)

    def as_dict(self):
        return {"omega": self.omega, "eta1": self.eta1, "a": self.a}


def validate_ext_div_params(omega, eta1, a) -> ExtDivParams:
    omega, eta1, a = float(omega), float(eta1), float(a)
    if not all(math.isfinite(v) for v in (omega, eta1, a)):
        raise ParamError("external-division parameters must be finite")
    if omega <= 1.0:
        raise ParamError(f"omega must exceed 1, got {omega}")
    if eta1 <= 0.0:
        raise ParamError(f"eta1 must be positive, got {eta1}")
    if eta1 >= math.log(omega):
        raise ParamError(f"eta1 must be below log(omega) = {math.log(omega):.6g}, got {eta1}")
    if a < 0.0:
        raise ParamError(f"a must be nonnegative, got {a}")
    denom = omega * math.exp(-eta1) - 1.0
    kappa = (omega - 1.0) / denom
    eta2 = math.log(kappa)
    # algebraic consequences of the checks above
    assert kappa >= math.exp(eta1) * (1.0 - 1e-12), (kappa, eta1)
    assert eta2 > eta1 or math.isclose(eta2, eta1, rel_tol=1e-12)
    a_tilde = math.log(a) + 1.0 if a > 0.0 else None
    return ExtDivParams(omega, eta1, a, kappa, eta2, a_tilde)


# -- Euclidean shrinkage ---------------------------------------------------


def soft(x, gamma):
    """Soft thresholding sgn(x) max(|x| - gamma, 0)."""
    if gamma <= 0:
        raise ParamError("gamma must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)


def _check_firm(tau, gamma):
    if not gamma > tau > 0:
        raise ParamError(f"firm shrinkage needs gamma > tau > 0, got tau={tau}, gamma={gamma}")


def firm(x, tau, gamma):
    """Firm shrinkage: 0 below tau, identity from gamma on, linear in between."""
    _check_firm(tau, gamma)
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    mid = np.sign(x) * gamma * (ax - tau) / (gamma - tau)
    return np.where(ax >= gamma, x, np.where(ax < tau, 0.0, mid))


def external_division_euclidean(x, tau, gamma):
    """Firm shrinkage written as gamma/(gamma-tau) soft_tau - tau/(gamma-tau) soft_gamma."""
    _check_firm(tau, gamma)
    w = gamma / (gamma - tau)
    return w * soft(x, tau) - (w - 1.0) * soft(x, gamma)


def shifted_soft(u, eta, center):
    """Prox of eta |. - center|, i.e. center + soft(u - center, eta)."""
    u = np.asarray(u, dtype=np.float64)
    return center + soft(u - center, eta)


# -- Bregman proximity operators -------------------------------------------


def bregman_prox_shifted_l1_bs(x, eta, a):
    """Boltzmann-Shannon Bregman prox of eta ||. - a 1||_1.

    Closed form: ``x e^-eta`` above ``a e^eta``, ``x e^eta`` below
    ``a e^-eta`` and ``a`` in between.
    """
    if a <= 0:
        raise ParamError("sparsity center a must be positive")
    if eta <= 0:
        raise ParamError("eta must be positive")
    x = as_vec(x)
    if np.any(x <= 0.0):
        raise DomainError("Bregman prox needs strictly positive input")
    return grad_h_conj(_BS, shifted_soft(grad_h(_BS, x), eta, math.log(a) + 1.0))


def bregman_prox_l1_bs(x, eta):
    """Boltzmann-Shannon Bregman prox of eta ||.||_1 on the positive orthant: x e^-eta."""
    if eta < 0:
        raise ParamError("eta must be nonnegative")
    x = as_vec(x)
    if np.any(x <= 0.0):
        raise DomainError("Bregman prox needs strictly positive input")
    return x * math.exp(-eta)


def bregman_prox_l1_burg(x, eta):
    """Burg Bregman prox of eta ||.||_1 on the positive orthant: x / (1 + eta x)."""
    if eta < 0:
        raise ParamError("eta must be nonnegative")
    x = as_vec(x)
    if np.any(x <= 0.0):
        raise DomainError("Bregman prox needs strictly positive input")
    return x / (1.0 + eta * x)


# -- external division -----------------------------------------------------


def ext_div_closed_form(x, p: ExtDivParams):
    """Piecewise-linear closed form of the external-division operator.

    Branches (intervals half-open exactly as below)::

        [0, a/k)            (w e^n1 - (w-1) k) x
        [a/k, a e^-n1)      w e^n1 x - (w-1) a
        [a e^-n1, a e^n1]   a
        (a e^n1, a k]       w e^-n1 x - (w-1) a
        (a k, inf)          x

    With ``a == 0`` the operator is the identity.
    """
    x = as_vec(x)
    if np.any(x < 0.0):
        raise DomainError("external-division operator is defined on the nonnegative orthant")
    if p.a == 0.0:
        return x.copy()
    w, a = p.omega, p.a
    up, down = math.exp(p.eta1), math.exp(-p.eta1)
    b1, b2, b3, b4 = p.breakpoints
    out = x.copy()  # identity branch
    out[x < b1] = p.first_slope * x[x < b1]
    sel = (x >= b1) & (x < b2)
    out[sel] = w * up * x[sel] - (w - 1.0) * a
    sel = (x >= b2) & (x <= b3)
    out[sel] = a
    sel = (x > b3) & (x <= b4)
    out[sel] = w * down * x[sel] - (w - 1.0) * a
    return out


def ext_div_composed(x, p: ExtDivParams):
    """omega P1(x) - (omega - 1) P2(x) with P_j = grad_h* o Prox_{eta_j|.-a~|} o grad_h."""
    x = as_vec(x)
    if np.any(x <= 0.0):
        raise DomainError("composed form needs strictly positive input")
    if p.a <= 0.0:
        raise ParamError("composed form needs a > 0")
    u = grad_h(_BS, x)
    p1 = grad_h_conj(_BS, shifted_soft(u, p.eta1, p.a_tilde))
    p2 = grad_h_conj(_BS, shifted_soft(u, p.eta2, p.a_tilde))
    return p.omega * p1 - (p.omega - 1.0) * p2


# slack for u computed as log(x) + 1 at x = a e^-eta1
_VALIDITY_SLACK = 1e-12


def dual_correction_S(u, p: ExtDivParams):
    """Dual-space map S(u) = S1(u) + log[omega (1 - exp(S2(u) - S1(u)))].

    Defined for u >= a~ - eta1 (i.e. x >= a e^-eta1); raises
    :class:`DomainError` below that or whenever the log argument is not
    strictly positive.
    """
    if p.a <= 0.0:
        raise ParamError("dual correction needs a > 0")
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < p.a_tilde - p.eta1 - _VALIDITY_SLACK):
        raise DomainError("dual correction is only defined for x >= a exp(-eta1)")
    s1 = shifted_soft(u, p.eta1, p.a_tilde)
    s2 = shifted_soft(u, p.eta2, p.a_tilde) + math.log((p.omega - 1.0) / p.omega)
    arg = p.omega * -np.expm1(s2 - s1)
    if np.any(arg <= 0.0):
        raise DomainError("log argument of the dual correction is not positive")
    return s1 + np.log(arg)
