"""Adaptive Simpson quadrature and bracketed bisection."""

from __future__ import annotations

__all__ = ["simpson", "bisect"]


class NumericsError(ArithmeticError):
    pass


def _simpson_step(f, a, fa, b, fb, m, fm):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def simpson(f, a: float, b: float, tol: float = 1e-10,
            max_depth: int = 40) -> float:
    """Adaptive Simpson integral of ``f`` on [a, b] to absolute tolerance."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson_step(f, a, fa, b, fb, m, fm)
    return _simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth)


def _simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = _simpson_step(f, a, fa, m, fm, lm, flm)
    right = _simpson_step(f, m, fm, b, fb, rm, frm)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + _simpson_rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0,
                           depth - 1))


def bisect(f, lo: float, hi: float, xtol: float = 1e-12,
           ftol: float | None = None, max_iter: int = 200) -> float:
    """Root of ``f`` on a bracketing interval [lo, hi].

    Stops when the bracket is narrower than ``xtol`` (and, if ``ftol`` is
    given, additionally drives |f| below it).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NumericsError(
            f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
        if hi - lo <= xtol and (ftol is None or abs(fmid) <= ftol):
            return 0.5 * (lo + hi)
    return 0.5 * (lo + hi)
