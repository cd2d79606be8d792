"""Pure numpy implementation of the hot kernels.

Used when the compiled extension ``extdiv._core`` is unavailable (or when
``EXTDIV_PURE_PYTHON=1``), and always for matrix-free forward operators.
The compiled module exposes the same functions with the same semantics.
"""
import math
import time

import numpy as np

# backward-step codes shared with the compiled kernel
FKL_L1 = 0
RKL_L1 = 1
PROPOSED = 2
IDENTITY = 3

CONVERGED = 1
BUDGET = 0
STEP_FAILED = 2


def ext_div(x, omega, eta1, a):
    """Closed-form external-division map, no validation, a > 0 assumed."""
    x = np.asarray(x, dtype=np.float64)
    up = math.exp(eta1)
    down = math.exp(-eta1)
    kappa = (omega - 1.0) / (omega * down - 1.0)
    s1 = omega * up - (omega - 1.0) * kappa
    shift = (omega - 1.0) * a
    b1, b2, b3, b4 = a / kappa, a * down, a * up, a * kappa
    return np.where(
        x < b1, s1 * x,
        np.where(x < b2, omega * up * x - shift,
                 np.where(x <= b3, a,
                          np.where(x <= b4, omega * down * x - shift, x))))


def _backward(code, z, step_eta, omega, eta1, a):
    if code == FKL_L1:
        return z / (1.0 + step_eta * z)
    if code == RKL_L1:
        return z * math.exp(-step_eta)
    if code == PROPOSED and a > 0.0:
        return ext_div(z, omega, eta1, a)
    return z


def nolips(matvec, rmatvec, b, background, x0, code, lam, l1_weight,
           omega, eta1, a, max_iter, tol, start_iter=0, trace_every=1,
           truth=None, log_floor=1e-12, iterate_floor=1e-250):
    """Run NoLips iterations ``start_iter .. max_iter - 1`` from `x0`.

    Boltzmann-Shannon iterates are kept at or above `iterate_floor`, which
    keeps them strictly positive and out of the subnormal range.

    Returns ``(x, iters_done, status, trace, best_nmse, best_x)`` where
    `trace` is a tuple of arrays ``(iter, delta_norm, fidelity, nmse,
    elapsed)``. On a Burg dual-domain violation the last valid iterate is
    returned with ``status == STEP_FAILED`` and `iters_done` equal to the
    index of the failing iteration.
    """
    x = np.array(x0, dtype=np.float64)
    bt = np.asarray(b, dtype=np.float64) + log_floor
    bg = np.asarray(background, dtype=np.float64)
    forward = code == FKL_L1
    step_eta = lam * l1_weight
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        tnorm = float(np.linalg.norm(truth))
        best_nmse = float(np.linalg.norm(x - truth)) / tnorm
        best_x = x.copy()
    else:
        best_nmse, best_x = math.nan, None
    rec_it, rec_d, rec_f, rec_n, rec_t = [], [], [], [], []
    t0 = time.perf_counter()
    status = BUDGET
    k = start_iter
    while k < max_iter:
        yt = matvec(x) + bg + log_floor
        if forward:
            g = rmatvec(1.0 - bt / yt)
            d = 1.0 / x + lam * g
            if np.any(d <= 0.0):
                status = STEP_FAILED
                break
            z = 1.0 / d
        else:
            logr = np.log(yt / bt)
            g = rmatvec(logr)
            z = x * np.exp(-lam * g)
        xn = _backward(code, z, step_eta, omega, eta1, a)
        if not forward:
            np.maximum(xn, iterate_floor, out=xn)
        delta = float(np.linalg.norm(xn - x))
        done = delta <= tol
        if k % trace_every == 0 or done or k + 1 == max_iter:
            if forward:
                fid = float(np.sum(bt * np.log(bt / yt) - bt + yt))
            else:
                fid = float(np.sum(yt * logr - yt + bt))
            rec_it.append(k)
            rec_d.append(delta)
            rec_f.append(fid)
            rec_n.append(float(np.linalg.norm(x - truth)) / tnorm if truth is not None else math.nan)
            rec_t.append(time.perf_counter() - t0)
        x = xn
        k += 1
        if truth is not None:
            e = float(np.linalg.norm(x - truth)) / tnorm
            if e < best_nmse:
                best_nmse = e
                best_x = x.copy()
        if done:
            status = CONVERGED
            break
    trace = (np.array(rec_it, dtype=np.int64), np.array(rec_d), np.array(rec_f),
             np.array(rec_n), np.array(rec_t))
    return x, k, status, trace, best_nmse, best_x


def nolips_dense(A, b, background, x0, code, lam, l1_weight, omega, eta1, a,
                 max_iter, tol, start_iter=0, trace_every=1, truth=None,
                 log_floor=1e-12, iterate_floor=1e-250):
    """:func:`nolips` for an explicit (m, n) matrix."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    return nolips(A.dot, A.T.dot, b, background, x0, code, lam, l1_weight,
                  omega, eta1, a, max_iter, tol, start_iter, trace_every,
                  truth, log_floor, iterate_floor)
