"""Adaptive Simpson quadrature over vectorised integrands."""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def adaptive_simpson(f, a, b, rtol=1e-8, max_depth=60):
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson refinement.

    All intervals at one refinement level are evaluated together, so ``f``
    must accept a 1-D array and return an array of the same shape.

    Parameters
    ----------
    f : callable
        Vectorised integrand.
    a, b : float
        Integration limits with ``a <= b``.
    rtol : float
        Target relative error of the total.
    max_depth : int
        Maximum number of interval halvings before giving up.

    Returns
    -------
    float

    Raises
    ------
    NumericError
        If some interval is still unresolved after ``max_depth`` halvings.
    """
    a, b = float(a), float(b)
    if b < a:
        raise ValueError("expected a <= b")
    if b == a:
        return 0.0

    # Seed with 8 panels; their total sets the absolute error budget.
    edges = np.linspace(a, b, 9)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = f(lo), f(mid), f(hi)
    whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    scale = abs(whole.sum())
    if scale == 0.0:
        scale = float(np.max(np.abs(np.concatenate([f_lo, f_mid, f_hi])))) * (b - a)
    tol = np.full(lo.shape, max(rtol * scale, 1e-300) / lo.size)

    total = 0.0
    for _ in range(max_depth):
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        f_lm, f_rm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid)
        right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rm + f_hi)
        err = left + right - whole
        done = np.abs(err) <= 15.0 * tol
        total += float(np.sum((left + right + err / 15.0)[done]))
        keep = ~done
        if not keep.any():
            return total
        lo, mid, hi = lo[keep], mid[keep], hi[keep]
        f_lo, f_mid, f_hi = f_lo[keep], f_mid[keep], f_hi[keep]
        lm, rm, f_lm, f_rm = lm[keep], rm[keep], f_lm[keep], f_rm[keep]
        left, right, tol = left[keep], right[keep], tol[keep] / 2.0
        # Children: [lo, mid] with midpoint lm and [mid, hi] with midpoint rm.
        lo = np.concatenate([lo, mid])
        hi = np.concatenate([mid, hi])
        new_mid = np.concatenate([lm, rm])
        f_lo, f_hi = np.concatenate([f_lo, f_mid]), np.concatenate([f_mid, f_hi])
        f_mid = np.concatenate([f_lm, f_rm])
        mid = new_mid
        whole = np.concatenate([left, right])
        tol = np.concatenate([tol, tol])
    raise NumericError(f"adaptive Simpson did not converge within depth {max_depth}")


def adaptive_simpson_cumulative(f, points, rtol=1e-8, max_depth=60):
    """Integrals of ``f`` from 0 to each of ``points``.

    The gaps between consecutive sorted points are refined together, each
    to ``rtol`` of its own integral, so for a nonnegative ``f`` every
    cumulative value carries relative error at most ``rtol``.

    Parameters
    ----------
    f : callable
        Vectorised integrand, nonnegative on the range.
    points : array_like
        Nonnegative upper limits, in any order.

    Returns
    -------
    numpy.ndarray
        Same shape as ``points``.
    """
    pts = np.asarray(points, dtype=float)
    if np.any(pts < 0):
        raise ValueError("upper limits must be nonnegative")
    knots, where = np.unique(np.concatenate([[0.0], pts.ravel()]), return_inverse=True)
    if knots.size == 1:
        return np.zeros_like(pts)
    lo, hi = knots[:-1], knots[1:]
    owner = np.arange(lo.size)
    mid = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = f(lo), f(mid), f(hi)
    whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    tol = np.maximum(rtol * np.abs(whole), 1e-300)
    acc = np.zeros(lo.size)
    for _ in range(max_depth):
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        f_lm, f_rm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid)
        right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rm + f_hi)
        err = left + right - whole
        done = np.abs(err) <= 15.0 * tol
        np.add.at(acc, owner[done], (left + right + err / 15.0)[done])
        keep = ~done
        if not keep.any():
            gaps = np.concatenate([[0.0], np.cumsum(acc)])
            return gaps[where[1:]].reshape(pts.shape)
        lo, mid, hi, owner = lo[keep], mid[keep], hi[keep], owner[keep]
        f_lo, f_mid, f_hi = f_lo[keep], f_mid[keep], f_hi[keep]
        lm, rm, f_lm, f_rm = lm[keep], rm[keep], f_lm[keep], f_rm[keep]
        left, right, tol = left[keep], right[keep], tol[keep] / 2.0
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        owner = np.concatenate([owner, owner])
        f_lo, f_hi = np.concatenate([f_lo, f_mid]), np.concatenate([f_mid, f_hi])
        mid = np.concatenate([lm, rm])
        f_mid = np.concatenate([f_lm, f_rm])
        whole = np.concatenate([left, right])
        tol = np.concatenate([tol, tol])
    raise NumericError(f"adaptive Simpson did not converge within depth {max_depth}")
