# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled NoLips kernels for dense forward operators.

Same interface and semantics as :mod:`extdiv._core_py`; the whole iteration
runs without the GIL so several solves can share a thread pool.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, NAN
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

cdef enum:
    FKL_L1 = 0
    RKL_L1 = 1
    PROPOSED = 2
    IDENTITY = 3

cdef enum:
    BUDGET_ = 0
    CONVERGED_ = 1
    STEP_FAILED_ = 2

BUDGET = BUDGET_
CONVERGED = CONVERGED_
STEP_FAILED = STEP_FAILED_


cdef inline double _now() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return ts.tv_sec + 1e-9 * ts.tv_nsec


cdef struct ExtDiv:
    double omega, up, down, s1, shift, b1, b2, b3, b4, a


cdef inline ExtDiv _ext_div_setup(double omega, double eta1, double a) noexcept nogil:
    cdef ExtDiv p
    cdef double kappa
    p.omega = omega
    p.a = a
    p.up = exp(eta1)
    p.down = exp(-eta1)
    kappa = (omega - 1.0) / (omega * p.down - 1.0)
    p.s1 = omega * p.up - (omega - 1.0) * kappa
    p.shift = (omega - 1.0) * a
    p.b1 = a / kappa
    p.b2 = a * p.down
    p.b3 = a * p.up
    p.b4 = a * kappa
    return p


cdef inline double _ext_div_1(const ExtDiv* p, double z) noexcept nogil:
    if z < p.b1:
        return p.s1 * z
    if z < p.b2:
        return p.omega * p.up * z - p.shift
    if z <= p.b3:
        return p.a
    if z <= p.b4:
        return p.omega * p.down * z - p.shift
    return z


def ext_div(x, double omega, double eta1, double a):
    """Closed-form external-division map, no validation, a > 0 assumed."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef ExtDiv p = _ext_div_setup(omega, eta1, a)
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _ext_div_1(&p, xv[i])
    return out.reshape(np.shape(x))


def nolips_dense(A, b, background, x0, int code, double lam, double l1_weight,
                 double omega, double eta1, double a, long max_iter, double tol,
                 long start_iter=0, long trace_every=1, truth=None,
                 double log_floor=1e-12, double iterate_floor=1e-250):
    """Run NoLips iterations ``start_iter .. max_iter - 1`` from `x0`.

    Returns ``(x, iters_done, status, trace, best_nmse, best_x)``; see
    :func:`extdiv._core_py.nolips`.
    """
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t m = Am.shape[0], n = Am.shape[1]
    cdef int m_ = <int>m, n_ = <int>n, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef double[::1] bt = np.asarray(b, dtype=np.float64) + log_floor
    cdef double[::1] bg = np.ascontiguousarray(background, dtype=np.float64)
    x_arr = np.array(x0, dtype=np.float64)
    xn_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] xn = xn_arr
    cdef double[::1] y = np.empty(m, dtype=np.float64)
    cdef double[::1] r = np.empty(m, dtype=np.float64)
    cdef double[::1] g = np.empty(n, dtype=np.float64)
    cdef double[::1] tv
    cdef double[::1] bx
    cdef bint has_truth = truth is not None
    cdef double tnorm = 1.0
    best_x_arr = None
    if has_truth:
        tv = np.ascontiguousarray(truth, dtype=np.float64)
        tnorm = sqrt(np.dot(tv, tv))
        best_x_arr = x_arr.copy()
        bx = best_x_arr
    if trace_every < 1:
        trace_every = 1
    cdef Py_ssize_t cap = (max_iter - start_iter) // trace_every + 3
    if cap < 3:
        cap = 3
    rec_it_arr = np.empty(cap, dtype=np.int64)
    rec_d_arr = np.empty(cap, dtype=np.float64)
    rec_f_arr = np.empty(cap, dtype=np.float64)
    rec_n_arr = np.empty(cap, dtype=np.float64)
    rec_t_arr = np.empty(cap, dtype=np.float64)
    cdef long long[::1] rec_it = rec_it_arr
    cdef double[::1] rec_d = rec_d_arr
    cdef double[::1] rec_f = rec_f_arr
    cdef double[::1] rec_n = rec_n_arr
    cdef double[::1] rec_t = rec_t_arr

    cdef ExtDiv p
    cdef bint use_t = code == PROPOSED and a > 0.0
    if use_t:
        p = _ext_div_setup(omega, eta1, a)
    cdef double step_eta = lam * l1_weight
    cdef double shrink = exp(-step_eta)
    cdef bint forward = code == FKL_L1
    cdef Py_ssize_t i, j, nrec = 0
    cdef long k = start_iter
    cdef int status = 0
    cdef double acc, z, v, d, delta, fid, e, best = NAN, t0
    cdef bint done, failed

    if has_truth:
        acc = 0.0
        for j in range(n):
            acc += (x[j] - tv[j]) * (x[j] - tv[j])
        best = sqrt(acc) / tnorm

    with nogil:
        t0 = _now()
        while k < max_iter:
            # row-major A is the column-major (n, m) matrix A^T
            dgemv(b"T", &n_, &m_, &one, &Am[0, 0], &n_, &x[0], &inc, &zero, &y[0], &inc)
            for i in range(m):
                y[i] = y[i] + bg[i] + log_floor
            if forward:
                for i in range(m):
                    r[i] = 1.0 - bt[i] / y[i]
            else:
                for i in range(m):
                    r[i] = log(y[i] / bt[i])
            dgemv(b"N", &n_, &m_, &one, &Am[0, 0], &n_, &r[0], &inc, &zero, &g[0], &inc)
            failed = False
            delta = 0.0
            for j in range(n):
                if forward:
                    d = 1.0 / x[j] + lam * g[j]
                    if d <= 0.0:
                        failed = True
                        break
                    z = 1.0 / d
                    v = z / (1.0 + step_eta * z)
                else:
                    z = x[j] * exp(-lam * g[j])
                    if code == RKL_L1:
                        v = z * shrink
                    elif use_t:
                        v = _ext_div_1(&p, z)
                    else:
                        v = z
                    if v < iterate_floor:
                        v = iterate_floor
                xn[j] = v
                delta = delta + (v - x[j]) * (v - x[j])
            if failed:
                status = STEP_FAILED_
                break
            delta = sqrt(delta)
            done = delta <= tol
            if k % trace_every == 0 or done or k + 1 == max_iter:
                fid = 0.0
                if forward:
                    for i in range(m):
                        fid = fid + bt[i] * log(bt[i] / y[i]) - bt[i] + y[i]
                else:
                    for i in range(m):
                        fid = fid + y[i] * r[i] - y[i] + bt[i]
                rec_it[nrec] = k
                rec_d[nrec] = delta
                rec_f[nrec] = fid
                if has_truth:
                    acc = 0.0
                    for j in range(n):
                        acc = acc + (x[j] - tv[j]) * (x[j] - tv[j])
                    rec_n[nrec] = sqrt(acc) / tnorm
                else:
                    rec_n[nrec] = NAN
                rec_t[nrec] = _now() - t0
                nrec = nrec + 1
            for j in range(n):
                x[j] = xn[j]
            k = k + 1
            if has_truth:
                acc = 0.0
                for j in range(n):
                    acc = acc + (x[j] - tv[j]) * (x[j] - tv[j])
                e = sqrt(acc) / tnorm
                if e < best:
                    best = e
                    for j in range(n):
                        bx[j] = x[j]
            if done:
                status = CONVERGED_
                break

    trace = (rec_it_arr[:nrec].copy(), rec_d_arr[:nrec].copy(), rec_f_arr[:nrec].copy(),
             rec_n_arr[:nrec].copy(), rec_t_arr[:nrec].copy())
    return x_arr, k, status, trace, best, best_x_arr
