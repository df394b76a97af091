"""Quantile fused-LASSO solver, brute-force oracle and KKT certificate.

The problem solved throughout is::

    minimize  sum_i rho_tau(y_i - u_i) + w * sum_i |u_{i+1} - u_i|

with ``w`` the total penalty multiplier.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .model import (
    ChangePointSet,
    ContractViolation,
    PiecewiseFit,
    _as_tau,
    _as_values,
    check_loss,
    default_jump_tol,
    extract_changepoints,
    objective_value,
)
from .prox import _tv1d, tv_prox


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iter: int = 200_000
    jump_tol: float | None = None
    algorithm: str = "admm"
    # merge adjacent segments when that keeps the objective optimal
    sparsify: bool = True

    def __post_init__(self):
        if self.algorithm not in ("admm", "dp"):
            raise ContractViolation(f"unknown algorithm {self.algorithm!r}")
        if not (self.rho > 0 and self.tol_primal > 0 and self.tol_dual > 0):
            raise ContractViolation("rho and tolerances must be positive")
        if self.max_iter < 1:
            raise ContractViolation("max_iter must be at least 1")
        if self.jump_tol is not None and self.jump_tol < 0:
            raise ContractViolation("jump_tol must be nonnegative")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class CertificateReport:
    passed: bool
    max_interior_violation: float
    max_active_violation: float
    intercept_violation: float
    per_index_bounds: tuple[tuple[int, float, float], ...]
    # exact check of the coupled system (one subgradient choice for all j)
    jointly_feasible: bool = True

    def violations(self) -> dict:
        return {
            "max_interior_violation": self.max_interior_violation,
            "max_active_violation": self.max_active_violation,
            "intercept_violation": self.intercept_violation,
        }


@nb.njit(cache=True, nogil=True)
def _admm(y, tau, w, rho, tol_p, tol_d, max_iter, u, d):
    n = y.shape[0]
    sig = 1.0 / rho
    up = sig * tau
    dn = sig * (1.0 - tau)
    v = np.empty(n)
    z = np.empty(n)
    u_new = np.empty(n)
    best = u.copy()
    best_obj = np.inf
    rp = np.inf
    rd = np.inf
    for it in range(1, max_iter + 1):
        for i in range(n):
            x = u[i] + d[i]
            r = y[i] - x
            if r > up:
                v[i] = x + up
            elif r < -dn:
                v[i] = x - dn
            else:
                v[i] = y[i]
            z[i] = v[i] - d[i]
        _tv1d(z, w / rho, u_new)
        rp = 0.0
        rd = 0.0
        for i in range(n):
            d[i] += u_new[i] - v[i]
            a = abs(u_new[i] - v[i])
            if a > rp:
                rp = a
            b = abs(u_new[i] - u[i])
            if b > rd:
                rd = b
            u[i] = u_new[i]
        rd *= rho
        if rp <= tol_p and rd <= tol_d:
            return it, True, rp, rd, u
        if it % 32 == 0:
            obj = 0.0
            for i in range(n):
                r = y[i] - u[i]
                obj += r * tau if r >= 0 else r * (tau - 1.0)
                if i > 0:
                    obj += w * abs(u[i] - u[i - 1])
            if obj < best_obj:
                best_obj = obj
                best[:] = u
    return max_iter, False, rp, rd, best


@nb.njit(cache=True, nogil=True)
def _dp_exact(y, tau, w):
    # Forward pass keeps the derivative of the cost-to-come message as a
    # nondecreasing step function: value `dl` at -inf plus positive
    # increments `ds` at sorted positions `xs` (live window [lo_i, hi_i)).
    # Min-convolution with w|.| clips that derivative to [-w, w]; the clip
    # points bound the previous level given the next one.
    n = y.shape[0]
    xs = np.empty(n + 1)
    ds = np.empty(n + 1)
    lo_i = 0
    hi_i = 0
    dl = 0.0
    clip_lo = np.empty(n)
    clip_hi = np.empty(n)
    for j in range(n):
        # add the check loss of observation j
        dl -= tau
        p = lo_i
        while p < hi_i and xs[p] < y[j]:
            p += 1
        if p < hi_i and xs[p] == y[j]:
            ds[p] += 1.0
        else:
            for q in range(hi_i, p, -1):
                xs[q] = xs[q - 1]
                ds[q] = ds[q - 1]
            xs[p] = y[j]
            ds[p] = 1.0
            hi_i += 1
        if j == n - 1:
            break
        # clip from the left at -w
        if dl < -w:
            cur = dl
            k = lo_i
            while True:
                cur += ds[k]
                if cur >= -w:
                    break
                k += 1
            clip_lo[j] = xs[k]
            ds[k] = cur + w
            lo_i = k
            if ds[k] <= 0.0:
                lo_i += 1
            dl = -w
        else:
            clip_lo[j] = -np.inf
        # clip from the right at +w
        dr = dl
        for k in range(lo_i, hi_i):
            dr += ds[k]
        if dr > w:
            cur = dr
            k = hi_i - 1
            while True:
                cur -= ds[k]
                if cur <= w:
                    break
                k -= 1
            clip_hi[j] = xs[k]
            ds[k] = w - cur
            hi_i = k + 1
            if ds[k] <= 0.0:
                hi_i -= 1
        else:
            clip_hi[j] = np.inf
    # minimizer of the last message: first point where the derivative reaches 0
    u = np.empty(n)
    cur = dl
    b = xs[hi_i - 1]
    for k in range(lo_i, hi_i):
        cur += ds[k]
        if cur >= 0.0:
            b = xs[k]
            break
    u[n - 1] = b
    for j in range(n - 2, -1, -1):
        b = min(max(b, clip_lo[j]), clip_hi[j])
        u[j] = b
    return u


@nb.njit(cache=True, nogil=True)
def _seg_cost(y, a, b, c, tau):
    s = 0.0
    for i in range(a, b):
        r = y[i] - c
        s += r * tau if r >= 0 else r * (tau - 1.0)
    return s


@nb.njit(cache=True, nogil=True)
def _best_merged_level(y, a, b, tau, w, left, has_left, right, has_right):
    # lowest minimizer of sum rho(y_i - c) over [a, b) plus w|c - left| + w|c - right|
    m = b - a
    pts = np.empty(m + 2)
    wt = np.empty(m + 2)
    lw = np.empty(m + 2)
    order = np.argsort(y[a:b])
    for k in range(m):
        pts[k] = y[a + order[k]]
        wt[k] = 1.0
        lw[k] = tau
    cnt = m
    if has_left:
        pts[cnt] = left
        wt[cnt] = 2.0 * w
        lw[cnt] = w
        cnt += 1
    if has_right:
        pts[cnt] = right
        wt[cnt] = 2.0 * w
        lw[cnt] = w
        cnt += 1
    idx = np.argsort(pts[:cnt], kind="mergesort")
    deriv = 0.0
    for k in range(cnt):
        deriv -= lw[k]
    for k in range(cnt):
        deriv += wt[idx[k]]
        if deriv >= 0.0:
            return pts[idx[k]]
    return pts[idx[cnt - 1]]


@nb.njit(cache=True, nogil=True)
def _sparsify(y, u, tau, w, jump_tol, eps):
    # Greedy merge of adjacent segments while the objective stays within eps
    # of its current value: picks a sparser point of a degenerate optimal face.
    n = y.shape[0]
    starts = np.empty(n + 1, dtype=np.int64)
    levels = np.empty(n)
    k_seg = 0
    for i in range(n):
        if i == 0 or abs(u[i] - u[i - 1]) > jump_tol:
            starts[k_seg] = i
            levels[k_seg] = u[i]
            k_seg += 1
    starts[k_seg] = n
    changed = True
    while changed and k_seg > 1:
        changed = False
        k = 0
        while k < k_seg - 1:
            a = starts[k]
            mid = starts[k + 1]
            b = starts[k + 2]
            has_l = k > 0
            has_r = k + 2 < k_seg
            left = levels[k - 1] if has_l else 0.0
            right = levels[k + 2] if has_r else 0.0
            old = _seg_cost(y, a, mid, levels[k], tau) + _seg_cost(y, mid, b, levels[k + 1], tau)
            old += w * abs(levels[k + 1] - levels[k])
            if has_l:
                old += w * abs(levels[k] - left)
            if has_r:
                old += w * abs(right - levels[k + 1])
            c = _best_merged_level(y, a, b, tau, w, left, has_l, right, has_r)
            new = _seg_cost(y, a, b, c, tau)
            if has_l:
                new += w * abs(c - left)
            if has_r:
                new += w * abs(right - c)
            if new <= old + eps:
                levels[k] = c
                for q in range(k + 1, k_seg - 1):
                    levels[q] = levels[q + 1]
                for q in range(k + 1, k_seg):
                    starts[q] = starts[q + 1]
                k_seg -= 1
                changed = True
            else:
                k += 1
    out = np.empty(n)
    for k in range(k_seg):
        for i in range(starts[k], starts[k + 1]):
            out[i] = levels[k]
    return out


def lower_quantile(y, tau) -> float:
    """Smallest minimizer of ``c -> sum rho_tau(y_i - c)``."""
    y = np.sort(np.asarray(y, dtype=float))
    k = math.ceil(len(y) * tau - 1e-9 * len(y))
    return float(y[min(max(k, 1), len(y)) - 1])


def _assemble(y, u, tau, w, jump_tol, **diag) -> PiecewiseFit:
    cps = extract_changepoints(u, jump_tol)
    starts = np.array((1,) + cps.indices, dtype=int) - 1
    return PiecewiseFit(
        u_hat=u,
        changepoints=cps,
        levels=u[starts].copy(),
        objective=objective_value(y, u, tau, w),
        **diag,
    )


def fit(y, tau, w: float, cfg: SolverConfig | None = None, warm_start: PiecewiseFit | None = None) -> PiecewiseFit:
    """Solve the quantile fused-LASSO problem by alternating proximal splitting.

    The splitting carries a check-loss block ``v`` and a total-variation
    block ``u`` tied by ``u = v``; both proximal steps are exact, so the
    reported ``u`` iterate is exactly piecewise constant. Non-convergence is
    reported via ``converged=False`` rather than raised.

    ``cfg.algorithm == "dp"`` switches to an exact dynamic program over
    piecewise-linear cost messages (no iterations, same problem).
    """
    cfg = cfg or DEFAULT_CONFIG
    y = _as_values(y)
    tau = _as_tau(tau)
    if not w >= 0:
        raise ContractViolation(f"w must be nonnegative, got {w}")
    n = len(y)
    if w == 0 or n < 2:
        return _assemble(y, y.copy(), tau, w, cfg.jump_tol, dual=np.zeros(n))

    if cfg.algorithm == "dp":
        u = _dp_exact(y, tau, float(w))
        return _finish(y, u, tau, w, cfg, iterations=n, converged=True,
                       primal_residual=0.0, dual_residual=0.0)

    if warm_start is not None and len(warm_start.u_hat) == n:
        u = np.array(warm_start.u_hat, dtype=float)
        d = np.zeros(n) if warm_start.dual is None else np.array(warm_start.dual, dtype=float)
    else:
        u = y.copy()
        d = np.zeros(n)
    it, ok, rp, rd, u = _admm(y, tau, float(w), cfg.rho, cfg.tol_primal, cfg.tol_dual, cfg.max_iter, u, d)
    return _finish(y, u, tau, w, cfg, iterations=int(it), converged=bool(ok),
                   primal_residual=float(rp), dual_residual=float(rd), dual=d)


def _finish(y, u, tau, w, cfg, **diag):
    jump_tol = default_jump_tol(u) if cfg.jump_tol is None else cfg.jump_tol
    if cfg.sparsify:
        obj = objective_value(y, u, tau, w)
        u = _sparsify(y, np.ascontiguousarray(u), tau, float(w), jump_tol, 1e-10 * (1.0 + abs(obj)))
    if not np.any(np.abs(np.diff(u)) > jump_tol):
        # any objective-optimal constant is a global optimum here; pin the lower one
        u = np.full(len(y), lower_quantile(y, tau))
    return _assemble(y, u, tau, w, cfg.jump_tol, **diag)


def _chain_levels(costs, cand, w, eps):
    """Exact min over level assignments for a fixed segmentation.

    ``costs[k, c]`` is the loss of segment ``k`` at level ``cand[c]``.
    Returns the optimal value and the lexicographically smallest optimal
    level sequence (``cand`` is sorted ascending).
    """
    k_seg = costs.shape[0]
    trans = w * np.abs(cand[:, None] - cand[None, :])
    to_go = np.empty_like(costs)
    to_go[-1] = costs[-1]
    for k in range(k_seg - 2, -1, -1):
        to_go[k] = costs[k] + np.min(trans + to_go[k + 1][None, :], axis=1)
    best = float(np.min(to_go[0]))
    pick = int(np.flatnonzero(to_go[0] <= best + eps)[0])
    levels = [cand[pick]]
    remaining = to_go[0, pick] - costs[0, pick]
    for k in range(1, k_seg):
        opts = trans[pick] + to_go[k]
        pick = int(np.flatnonzero(opts <= remaining + eps)[0])
        levels.append(cand[pick])
        remaining = to_go[k, pick] - costs[k, pick]
    return best, levels


def brute_force_fit(y, tau, w: float, max_n: int = 10) -> PiecewiseFit:
    """Global minimizer by exhaustive search, for tiny problems.

    Enumerates every segmentation; for each, segment levels range over the
    observed values. The objective is piecewise linear in ``u``, so some
    optimum sits at a vertex whose levels are data values. Within a
    segmentation the assignment minimum is found exactly by dynamic
    programming over the candidate levels. Ties go to fewer change-points,
    then to the lexicographically smaller level sequence.
    """
    y = _as_values(y)
    tau = _as_tau(tau)
    n = len(y)
    if n > max_n:
        raise ContractViolation(f"brute_force_fit refuses n={n} > {max_n}")
    cand = np.unique(y)
    pointwise = check_loss(y[:, None] - cand[None, :], tau)  # (n, n_cand)
    eps = 1e-10 * (1.0 + float(np.sum(np.abs(y))) + w)

    best_key, best_u = None, None
    for mask in itertools.product((False, True), repeat=n - 1):
        bounds = [0] + [i + 1 for i, m in enumerate(mask) if m] + [n]
        costs = np.array([pointwise[a:b].sum(axis=0) for a, b in zip(bounds[:-1], bounds[1:])])
        val, levels = _chain_levels(costs, cand, w, eps)
        u = np.repeat(levels, np.diff(bounds))
        jumps = np.flatnonzero(np.diff(u))
        merged = tuple(u[np.concatenate(([0], jumps + 1))])
        key = (val, len(jumps), merged, tuple(u))
        if best_key is None or _better(key, best_key, eps):
            best_key, best_u = key, u
    return _assemble(y, best_u.astype(float), tau, w, 0.0)


def _better(key, incumbent, eps):
    if key[0] < incumbent[0] - eps:
        return True
    if key[0] > incumbent[0] + eps:
        return False
    return key[1:] < incumbent[1:]


@nb.njit(cache=True, nogil=True)
def _suffix_feasible(lo_g, hi_g, target_lo, target_hi):
    # backward reachability of suffix sums S_j = sum_{i>=j} g_i, g_i in [lo_g, hi_g],
    # subject to target_lo[j] <= S_j <= target_hi[j]
    lo = 0.0
    hi = 0.0
    for j in range(lo_g.shape[0] - 1, -1, -1):
        lo = max(lo + lo_g[j], target_lo[j])
        hi = min(hi + hi_g[j], target_hi[j])
        if lo > hi:
            return False
    return True


def _subgradient_bounds(r, tau, tol_res):
    lo_g = np.where(r > tol_res, tau, tau - 1.0)
    hi_g = np.where(r < -tol_res, tau - 1.0, tau)
    return lo_g, hi_g


def kkt_certificate(y, fit_or_u, tau, w: float, tol_res: float = 1e-6, tol_cert: float = 1e-6,
                    jump_tol: float | None = None) -> CertificateReport:
    """Check the first-order optimality conditions of a candidate fit.

    Each residual contributes a subgradient interval of the check loss
    (a point when the residual is clearly nonzero, ``[tau - 1, tau]`` when it
    is within ``tol_res`` of zero). The suffix sums of these intervals must
    contain 0 at the intercept, meet ``[-w, w]`` at every index and contain
    ``+w`` or ``-w`` at up- and down-jumps respectively. These per-index
    checks are only necessary; ``jointly_feasible`` reports whether a single
    subgradient choice satisfies all of them at once, which makes the
    conditions sufficient. ``passed`` requires both.
    """
    y = _as_values(y)
    tau = _as_tau(tau)
    u = np.asarray(getattr(fit_or_u, "u_hat", fit_or_u), dtype=float)
    if u.shape != y.shape:
        raise ContractViolation(f"fit has length {len(u)}, signal has {len(y)}")
    n = len(y)
    lo_g, hi_g = _subgradient_bounds(y - u, tau, tol_res)
    L = np.cumsum(lo_g[::-1])[::-1]
    U = np.cumsum(hi_g[::-1])[::-1]

    intercept = max(0.0, L[0], -U[0])
    interior = np.maximum(0.0, np.maximum(L[1:] - w, -w - U[1:]))
    max_interior = float(interior.max()) if n > 1 else 0.0

    cps = getattr(fit_or_u, "changepoints", None)
    if cps is None:
        cps = extract_changepoints(u, jump_tol)
    max_active = 0.0
    t_lo = np.full(n, -w - tol_cert)
    t_hi = np.full(n, w + tol_cert)
    t_lo[0], t_hi[0] = -tol_cert, tol_cert
    for t in cps:
        s = w if u[t - 1] > u[t - 2] else -w
        j = t - 1
        max_active = max(max_active, s - U[j], L[j] - s, 0.0)
        t_lo[j], t_hi[j] = s - tol_cert, s + tol_cert

    joint = bool(_suffix_feasible(lo_g, hi_g, t_lo, t_hi))
    passed = max(intercept, max_interior, max_active) <= tol_cert and joint
    bounds = tuple((j + 1, float(L[j]), float(U[j])) for j in range(n))
    return CertificateReport(
        passed=bool(passed),
        max_interior_violation=max_interior,
        max_active_violation=float(max_active),
        intercept_violation=float(intercept),
        per_index_bounds=bounds,
        jointly_feasible=joint,
    )


def constant_threshold(y, tau, c: float, tol: float = 1e-12) -> float:
    """Smallest ``w`` for which the constant fit ``c`` satisfies the KKT system.

    Infinite when ``c`` does not minimize the constant check loss.
    """
    y = _as_values(y)
    n = len(y)
    lo_g, hi_g = _subgradient_bounds(y - c, tau, 0.0)
    t_lo = np.zeros(n)
    t_hi = np.zeros(n)

    def ok(w):
        t_lo[1:], t_hi[1:] = -w, w
        return _suffix_feasible(lo_g, hi_g, t_lo, t_hi)

    hi = float(n)
    if not ok(hi):
        return math.inf
    lo = 0.0
    if ok(lo):
        return 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def l2_fused_fit(y, w: float, jump_tol: float | None = None) -> PiecewiseFit:
    """Squared-loss fused LASSO; its solution is the TV proximal map of ``y``."""
    y = _as_values(y)
    if not w >= 0:
        raise ContractViolation(f"w must be nonnegative, got {w}")
    u = tv_prox(y, w)
    cps = extract_changepoints(u, jump_tol)
    starts = np.array((1,) + cps.indices, dtype=int) - 1
    obj = 0.5 * float(np.sum((y - u) ** 2)) + w * float(np.sum(np.abs(np.diff(u))))
    return PiecewiseFit(u_hat=u, changepoints=cps, levels=u[starts].copy(), objective=obj)
