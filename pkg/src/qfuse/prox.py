"""Proximal kernels: the check-loss prox and the exact 1-D total-variation prox."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import numba as nb


@dataclass(frozen=True)
class ProxParams:
    sigma: float
    w_over_rho: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.w_over_rho >= 0:
            raise ValueError(f"w_over_rho must be nonnegative, got {self.w_over_rho}")


@nb.njit(cache=True, nogil=True)
def _prox_check_scalar(x, y, tau, sigma):
    r = y - x
    if r > sigma * tau:
        return x + sigma * tau
    if r < -sigma * (1.0 - tau):
        return x - sigma * (1.0 - tau)
    return y


def prox_check(x, y, tau, sigma):
    """Minimizer over v of ``rho_tau(y - v) + (v - x)**2 / (2 * sigma)``.

    Works elementwise on arrays as well as on scalars.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = y - x
    out = np.where(
        r > sigma * tau,
        x + sigma * tau,
        np.where(r < -sigma * (1.0 - tau), x - sigma * (1.0 - tau), y),
    )
    return out[()] if out.ndim == 0 else out


@nb.njit(cache=True, nogil=True)
def _tv1d(x, lam, out):
    # Condat's direct algorithm (IEEE SPL 2013). Writes each segment with a
    # single value, so the output is exactly piecewise constant.
    n = x.shape[0]
    if n == 0:
        return
    if lam <= 0.0:
        for i in range(n):
            out[i] = x[i]
        return
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    umin = lam
    umax = -lam
    vmin = x[0] - lam
    vmax = x[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = x[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = x[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += x[k + 1] - vmin
        if umin < -lam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kplus = k0
            kminus = k0
            vmin = x[k0]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
        else:
            umax += x[k + 1] - vmax
            if umax > lam:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                kminus = k0
                vmax = x[k0]
                vmin = vmax - twolam
                umin = lam
                umax = -lam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= -lam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = -lam


def tv_prox(x, w):
    """Exact minimizer of ``0.5 * ||u - x||^2 + w * sum |u[i+1] - u[i]|``.

    Linear-time taut-string method; values inside a segment are bit-identical.
    """
    if not w >= 0:
        raise ValueError(f"w must be nonnegative, got {w}")
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty_like(x)
    _tv1d(x, float(w), out)
    return out


def _tv_objective(x, u, w):
    return 0.5 * np.sum((x - u) ** 2) + w * np.sum(np.abs(np.diff(u)))


def tv_prox_oracle(x, w, max_len=12):
    """Slow reference for :func:`tv_prox` by enumerating segmentations.

    For every segmentation and every sign pattern of its jumps the objective
    is a smooth quadratic in the segment levels with a closed-form minimizer;
    candidates violating their own sign pattern are discarded.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n > max_len:
        raise ValueError(f"tv_prox_oracle refuses n={n} > {max_len}")
    if n == 0:
        return x.copy()
    best_u, best_val = x.mean() * np.ones(n), np.inf
    for mask in itertools.product((False, True), repeat=n - 1):
        starts = [0] + [i + 1 for i, m in enumerate(mask) if m]
        bounds = starts + [n]
        lengths = np.diff(bounds)
        means = np.array([x[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
        n_jumps = len(starts) - 1
        for signs in itertools.product((-1.0, 1.0), repeat=n_jumps):
            s = np.concatenate(([0.0], signs, [0.0]))
            levels = means - w * (s[:-1] - s[1:]) / lengths
            if n_jumps and np.any(np.asarray(signs) * np.diff(levels) < 0):
                continue
            u = np.repeat(levels, lengths)
            val = _tv_objective(x, u, w)
            if val < best_val - 1e-12:
                best_u, best_val = u, val
    return best_u
