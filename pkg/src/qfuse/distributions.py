"""Inverse CDFs for the error laws used in the simulations.

All functions are vectorized over ``p`` and return a float for scalar input.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from .model import ContractViolation

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425

_SQRT3 = math.sqrt(3.0)


def _check_p(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ContractViolation("probabilities must lie strictly inside (0, 1)")
    return p


def _scalar(x):
    return x[()] if x.ndim == 0 else x


def _polyval(coefs, x):
    out = np.zeros_like(x) + coefs[0]
    for c in coefs[1:]:
        out = out * x + c
    return out


def normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def _normal_icdf_lower(p):
    # p <= 0.5
    x = np.empty_like(p)
    tail = p < _P_LOW
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = _polyval(_C, q) / (_polyval(_D, q) * q + 1.0)
    q = p[~tail] - 0.5
    r = q * q
    x[~tail] = _polyval(_A, r) * q / (_polyval(_B, r) * r + 1.0)
    # one Newton step on the CDF
    e = normal_cdf(x) - p
    return x - e * math.sqrt(2.0 * math.pi) * np.exp(0.5 * x * x)


def normal_icdf(p):
    """Standard normal quantile."""
    p = _check_p(p)
    pa = np.atleast_1d(p)
    upper = pa > 0.5
    x = np.empty_like(pa)
    x[~upper] = _normal_icdf_lower(pa[~upper])
    x[upper] = -_normal_icdf_lower(1.0 - pa[upper])
    return _scalar(x.reshape(p.shape))


def _t3_left_tail(a):
    # arctan(a) - a / (1 + a^2), accurate for small a
    a = np.asarray(a, dtype=float)
    out = np.arctan(a) - a / (1.0 + a * a)
    small = a < 0.1
    if np.any(small):
        s = a[small]
        s2 = s * s
        acc = np.zeros_like(s)
        term = s * s2
        for k in range(1, 12):
            acc += (-1) ** (k + 1) * term * (2.0 * k) / (2.0 * k + 1.0)
            term = term * s2
        out[small] = acc
    return out


def t3_cdf(x):
    """CDF of Student's t with three degrees of freedom."""
    x = np.asarray(x, dtype=float)
    xa = np.atleast_1d(x)
    nz = xa != 0
    left = np.full(xa.shape, 0.5)
    left[nz] = _t3_left_tail(_SQRT3 / np.abs(xa[nz])) / math.pi
    out = np.where(xa < 0, left, 1.0 - left)
    return _scalar(out.reshape(x.shape))


def t3_pdf(x):
    x = np.asarray(x, dtype=float)
    return 6.0 * _SQRT3 / (math.pi * (3.0 + x * x) ** 2)


def _t3_icdf_tail(q, tol=1e-14, max_iter=50):
    # deep left tail: Newton in a = sqrt(3) / |x|, where pi * F(x) = D(a)
    a = np.cbrt(1.5 * math.pi * q)
    for _ in range(max_iter):
        d = _t3_left_tail(a) - math.pi * q
        a_new = a - d * (1.0 + a * a) ** 2 / (2.0 * a * a)
        a_new = np.where(a_new > 0, a_new, 0.5 * a)
        done = np.abs(a_new - a) <= tol * a
        a = a_new
        if np.all(done):
            break
    return -_SQRT3 / a


def _t3_icdf_body(q, tol=1e-12, max_iter=200):
    # bracketed Newton on F(x) = q for 1e-6 <= q <= 0.5, x <= 0
    x = np.where(q < 0.05, -np.cbrt(2.0 * _SQRT3 / (math.pi * q)), _normal_icdf_lower(q))
    hi = np.zeros_like(q)
    lo = np.minimum(x, -1.0)
    while True:
        bad = t3_cdf(lo) > q
        if not np.any(bad):
            break
        lo[bad] *= 2.0
    x = np.clip(x, lo, hi)
    for _ in range(max_iter):
        f = t3_cdf(x) - q
        hi = np.where(f > 0, x, hi)
        lo = np.where(f <= 0, x, lo)
        step = x - f / t3_pdf(x)
        inside = (step > lo) & (step < hi)
        x_new = np.where(inside, step, 0.5 * (lo + hi))
        done = np.abs(x_new - x) <= tol * np.maximum(1.0, np.abs(x))
        x = x_new
        if np.all(done):
            break
    return x


def _t3_icdf_lower(q):
    x = np.empty_like(q)
    tail = q < 1e-6
    x[tail] = _t3_icdf_tail(q[tail])
    x[~tail] = _t3_icdf_body(q[~tail])
    return x


def t3_icdf(p):
    """Quantile of Student's t with three degrees of freedom."""
    p = _check_p(p)
    pa = np.atleast_1d(p)
    upper = pa > 0.5
    x = np.empty_like(pa)
    x[~upper] = _t3_icdf_lower(pa[~upper])
    x[upper] = -_t3_icdf_lower(1.0 - pa[upper])
    x[pa == 0.5] = 0.0
    return _scalar(x.reshape(p.shape))


def cauchy_cdf(x):
    return 0.5 + np.arctan(np.asarray(x, dtype=float)) / math.pi


def cauchy_icdf(p):
    p = _check_p(p)
    return _scalar(np.tan(math.pi * (p - 0.5)))


_ICDF = {"normal": normal_icdf, "student3": t3_icdf, "cauchy": cauchy_icdf}
_CDF = {"normal": normal_cdf, "student3": t3_cdf, "cauchy": cauchy_cdf}


def icdf(law: str, p):
    if law == "zero":
        return _scalar(np.zeros_like(_check_p(p)))
    try:
        return _ICDF[law](p)
    except KeyError:
        raise ContractViolation(f"unknown error law {law!r}") from None


def cdf(law: str, x):
    try:
        return _CDF[law](x)
    except KeyError:
        raise ContractViolation(f"no CDF for error law {law!r}") from None
