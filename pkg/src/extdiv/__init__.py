"""Bregman proximal-gradient (NoLips) solvers for sparse Poisson inverse problems.

The distinguishing backward step is the external division of two
Boltzmann-Shannon Bregman proximity operators. It is piecewise linear and
equals the identity on large inputs, so large coefficients carry no
shrinkage bias.

The hot loop runs in a compiled extension when it is available
(``extdiv.BACKEND == "compiled"``) and in numpy otherwise; set
``EXTDIV_PURE_PYTHON=1`` before import to force the numpy path.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .entropy import LegendreKind, bregman_div, entropy_value, grad_h, grad_h_conj
from .errors import DomainError, ExtDivError, FormatError, ParamError, SizeError, StepError
from .losses import (DenseOperator, FidelityKind, LinearOperator, MatrixFreeOperator,
                     PoissonModel, fidelity_grad, fidelity_value, step_bound)
from .shrinkage import (ExtDivParams, bregman_prox_l1_bs, bregman_prox_l1_burg,
                        bregman_prox_shifted_l1_bs, dual_correction_S, ext_div_closed_form,
                        ext_div_composed, external_division_euclidean, firm, soft,
                        validate_ext_div_params)
from .solver import (IterateTrace, SolveResult, SolverConfig, Trace, Variant, backward_step,
                     mirror_step, solve)

__all__ = [
    "BACKEND", "LegendreKind", "bregman_div", "entropy_value", "grad_h", "grad_h_conj",
    "DomainError", "ExtDivError", "FormatError", "ParamError", "SizeError", "StepError",
    "DenseOperator", "FidelityKind", "LinearOperator", "MatrixFreeOperator", "PoissonModel",
    "fidelity_grad", "fidelity_value", "step_bound", "ExtDivParams", "bregman_prox_l1_bs",
    "bregman_prox_l1_burg", "bregman_prox_shifted_l1_bs", "dual_correction_S",
    "ext_div_closed_form", "ext_div_composed", "external_division_euclidean", "firm", "soft",
    "validate_ext_div_params", "IterateTrace", "SolveResult", "SolverConfig", "Trace",
    "Variant", "backward_step", "mirror_step", "solve",
]
