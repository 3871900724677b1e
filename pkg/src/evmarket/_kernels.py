"""Hot numeric kernels, jit-compiled when numba is available.

The annual fixed-point solve and the year-by-year stock recursions sit inside
Monte Carlo loops (synthetic replications, solver grids), so they get an
optional ``numba.njit`` treatment. Setting the ``EVMARKET_NO_NUMBA``
environment variable to a truthy value forces the plain-Python/numpy path;
the same source runs either way. ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

from __future__ import annotations

import os

import numpy as np

_FALLBACK = os.environ.get("EVMARKET_NO_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

if not _FALLBACK:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None
        _FALLBACK = True

NUMBA_ENABLED = not _FALLBACK

# fixed_point_sales status codes
FP_CONVERGED = 0
FP_BISECTED = 1
FP_FAILED = 2

_BISECT_MAX = 1200


def _jit(func):
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    return func


@_jit
def fixed_point_sales(c, k, delta, prev_stock, tol, max_iter):
    """Solve ``s = exp(c + k*log(s + delta*prev_stock))`` for ``s > 0``.

    Damped iteration (factor 0.5) starts at
    ``s0 = exp(c) * (delta*prev_stock + 1)**k``; if it has not met the
    tolerance within ``max_iter`` steps, a bracketing bisection on
    ``f(s) = s - g(s)`` finishes the job. Convergence means
    ``|s - g(s)| <= tol * max(1, s)``.

    Returns ``(s, status, iterations, residual)`` with status one of
    FP_CONVERGED, FP_BISECTED, FP_FAILED.
    """
    d = delta * prev_stock
    if k == 0.0:
        return np.exp(c), FP_CONVERGED, 1, 0.0

    s = np.exp(c) * (d + 1.0) ** k
    it = 0
    while it < max_iter:
        g = np.exp(c + k * np.log(s + d))
        resid = abs(s - g)
        if resid <= tol * max(1.0, s):
            return s, FP_CONVERGED, it + 1, resid
        s = 0.5 * s + 0.5 * g
        it += 1

    # Bracket the root of f(s) = s - g(s), expanding geometrically from the
    # last damped iterate, then bisect.
    lo = s
    flo = lo - np.exp(c + k * np.log(lo + d))
    n_exp = 0
    while flo > 0.0 and n_exp < _BISECT_MAX:
        lo *= 0.5
        if lo < 1e-300:
            lo = 1e-300
            flo = lo - np.exp(c + k * np.log(lo + d))
            break
        flo = lo - np.exp(c + k * np.log(lo + d))
        n_exp += 1
    hi = s
    fhi = hi - np.exp(c + k * np.log(hi + d))
    n_exp = 0
    while fhi < 0.0 and n_exp < _BISECT_MAX:
        hi *= 2.0
        fhi = hi - np.exp(c + k * np.log(hi + d))
        n_exp += 1
    if flo > 0.0 or fhi < 0.0:
        resid = abs(s - np.exp(c + k * np.log(s + d)))
        return s, FP_FAILED, max_iter, resid

    it = 0
    mid = 0.5 * (lo + hi)
    while it < _BISECT_MAX:
        mid = 0.5 * (lo + hi)
        fmid = mid - np.exp(c + k * np.log(mid + d))
        if fmid > 0.0:
            hi = mid
        else:
            lo = mid
        if (hi - lo) <= tol * max(1.0, mid):
            g = np.exp(c + k * np.log(mid + d))
            return mid, FP_BISECTED, it + 1, abs(mid - g)
        it += 1
    resid = abs(mid - np.exp(c + k * np.log(mid + d)))
    return mid, FP_FAILED, it, resid


@_jit
def install_base_path(sales, delta, initial_stock):
    """Cumulative stock recursion ``q_t = s_t + delta * q_{t-1}``.

    ``sales`` is year-ordered; returns the stock after each year.
    """
    n = sales.shape[0]
    out = np.empty(n, dtype=np.float64)
    prev = initial_stock
    for t in range(n):
        prev = sales[t] + delta * prev
        out[t] = prev
    return out


@_jit
def coupled_sales_batch(c_arr, k, delta, prev_arr, tol, max_iter):
    """Vectorized annual solves: one fixed point per (c, prev_stock) pair.

    Returns ``(solutions, n_failed)``.
    """
    n = c_arr.shape[0]
    out = np.empty(n, dtype=np.float64)
    n_failed = 0
    for i in range(n):
        s, status, _, _ = fixed_point_sales(
            c_arr[i], k, delta, prev_arr[i], tol, max_iter)
        out[i] = s
        if status == FP_FAILED:
            n_failed += 1
    return out, n_failed


@_jit
def reduced_form_path(c, k, delta, initial_stock, n_years, tol, max_iter):
    """Iterate the annual fixed point forward for ``n_years``.

    Returns ``(sales, stocks, status, failed_year)``; status is FP_FAILED and
    ``failed_year`` the offending index when any annual solve fails,
    otherwise status 0 and failed_year -1.
    """
    sales = np.zeros(n_years, dtype=np.float64)
    stocks = np.zeros(n_years, dtype=np.float64)
    prev = initial_stock
    for t in range(n_years):
        s, status, _, _ = fixed_point_sales(c, k, delta, prev, tol, max_iter)
        if status == FP_FAILED:
            return sales, stocks, FP_FAILED, t
        sales[t] = s
        prev = s + delta * prev
        stocks[t] = prev
    return sales, stocks, 0, -1
