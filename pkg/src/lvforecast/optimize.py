"""Thin wrappers around scipy's derivative-free optimisers."""
from __future__ import annotations

import numpy as np
from scipy.optimize import OptimizeResult, minimize, minimize_scalar


def bounded_scalar(fun, bounds, xatol=1e-4):
    """Bounded Brent/golden-section search on a closed interval."""
    lo, hi = bounds
    res = minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    # the bounded method never evaluates the endpoints themselves
    best_x, best_f = float(res.x), float(res.fun)
    f_hi = float(fun(hi))
    if f_hi < best_f:
        best_x, best_f = hi, f_hi
    return OptimizeResult(x=best_x, fun=best_f, nit=res.nit, success=res.success)


def bounded_nelder_mead(fun, x0, bounds, tol=1e-4, maxiter=200):
    """Nelder-Mead (standard coefficients 1, 2, 0.5, 0.5) with box bounds.

    The start point is evaluated first so the result never scores worse.
    """
    x0 = np.asarray(x0, dtype=float)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    f0 = float(fun(x0))
    res = minimize(fun, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                   options={"xatol": tol, "fatol": tol, "maxiter": maxiter, "adaptive": False})
    x = np.clip(res.x, lo, hi)
    if not res.fun <= f0:
        return OptimizeResult(x=x0, fun=f0, nit=res.nit, success=res.success)
    return OptimizeResult(x=x, fun=float(res.fun), nit=res.nit, success=res.success)
