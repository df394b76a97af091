"""Choosing the penalty weight: asymptotic rule, target change-point count,
oracle MSE, and grid solution paths.

Every weight produced here is the total multiplier ``w`` of the variation
term, as consumed by :func:`qfuse.solver.fit`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import ContractViolation, PiecewiseFit, _as_tau, _as_values
from .solver import DEFAULT_CONFIG, SolverConfig, constant_threshold, fit, l2_fused_fit, lower_quantile

METHODS = ("qlasso", "l2lasso")


@dataclass(frozen=True)
class Fixed:
    w: float

    def __post_init__(self):
        if not self.w >= 0:
            raise ContractViolation(f"fixed weight must be nonnegative, got {self.w}")

    @property
    def label(self) -> str:
        return f"fixed:{self.w:g}"


@dataclass(frozen=True)
class Asymptotic:
    C: float = 10.0

    def __post_init__(self):
        if not self.C > 0:
            raise ContractViolation(f"C must be positive, got {self.C}")

    @property
    def label(self) -> str:
        return f"as:{self.C:g}"


@dataclass(frozen=True)
class TargetK:
    K: int

    def __post_init__(self):
        if self.K < 0:
            raise ContractViolation(f"target count must be nonnegative, got {self.K}")

    @property
    def label(self) -> str:
        return f"k:{self.K}"


@dataclass(frozen=True)
class OracleMSE:
    """Oracle selection over an explicit grid, or ``size`` log-spaced points
    from ``lambda_max / span`` to ``lambda_max`` when ``grid`` is None."""

    grid: tuple[float, ...] | None = None
    size: int = 64
    span: float = 1000.0

    def __post_init__(self):
        if self.grid is not None:
            g = tuple(float(x) for x in self.grid)
            if not g or any(x <= 0 for x in g) or any(b <= a for a, b in zip(g, g[1:])):
                raise ContractViolation("grid must be nonempty, positive and increasing")
            object.__setattr__(self, "grid", g)
        if self.size < 1 or not self.span > 1:
            raise ContractViolation("need size >= 1 and span > 1")

    @property
    def label(self) -> str:
        return "mse"


LambdaMode = Fixed | Asymptotic | TargetK | OracleMSE


def parse_mode(text: str) -> LambdaMode:
    """Parse ``as:C``, ``k:K``, ``mse`` or ``fixed:w``."""
    head, _, arg = text.partition(":")
    try:
        if head == "as":
            return Asymptotic(float(arg) if arg else 10.0)
        if head == "k":
            return TargetK(int(arg))
        if head == "mse" and not arg:
            return OracleMSE()
        if head == "fixed":
            return Fixed(float(arg))
    except ValueError as exc:
        raise ContractViolation(f"bad lambda mode {text!r}: {exc}") from None
    raise ContractViolation(f"unknown lambda mode {text!r}")


class Selection(NamedTuple):
    w: float
    fit: PiecewiseFit
    exact: bool = True


def lambda_asymptotic(n: int, C: float = 10.0) -> float:
    """``C * sqrt(log(n) / n)`` with the natural logarithm."""
    if n < 2:
        raise ContractViolation(f"n must be at least 2, got {n}")
    return C * math.sqrt(math.log(n) / n)


def lambda_max(y, tau, method: str = "qlasso") -> float:
    """Smallest weight at which the fit is constant.

    For the quantile problem this is the KKT threshold of the objective-optimal
    constants (the empirical tau-quantile interval endpoints). For the squared
    loss it is the largest absolute partial sum of the centred data.
    """
    y = _as_values(y)
    if method == "l2lasso":
        tail = np.cumsum((y - y.mean())[::-1])[::-1]
        return float(np.max(np.abs(tail[1:]))) if len(y) > 1 else 0.0
    _check_method(method)
    tau = _as_tau(tau)
    ys = np.sort(y)
    k = min(max(math.ceil(len(y) * tau - 1e-9 * len(y)), 1), len(y))
    ends = {lower_quantile(y, tau)}
    if k < len(y) and abs(len(y) * tau - k) <= 1e-9 * len(y):
        ends.add(float(ys[k]))
    return min(constant_threshold(y, tau, c) for c in ends)


def _check_method(method):
    if method not in METHODS:
        raise ContractViolation(f"unknown method {method!r}")


class _Fitter:
    """Caches fits by weight and warm-starts each from the nearest one."""

    def __init__(self, y, tau, method, cfg):
        _check_method(method)
        self.y, self.tau, self.method, self.cfg = y, tau, method, cfg
        self.cache: dict[float, PiecewiseFit] = {}

    def __call__(self, w: float) -> PiecewiseFit:
        w = float(w)
        if w in self.cache:
            return self.cache[w]
        if self.method == "l2lasso":
            f = l2_fused_fit(self.y, w, self.cfg.jump_tol)
        else:
            warm = None
            if self.cache:
                near = min(self.cache, key=lambda v: (abs(v - w), v))
                warm = self.cache[near]
            f = fit(self.y, self.tau, w, self.cfg, warm_start=warm)
        self.cache[w] = f
        return f


def lambda_for_k(y, tau, K_target: int, cfg: SolverConfig | None = None, method: str = "qlasso",
                 refine_points: int = 64, rel_tol: float = 1e-3) -> Selection:
    """Largest weight whose fit has exactly ``K_target`` change-points.

    Bisects on ``(0, lambda_max]`` keeping a lower end with at least
    ``K_target`` jumps, then scans ``refine_points`` weights in the final
    bracket since the count need not be monotone in ``w``. When no weight hits
    the target, returns the closest count (ties to larger ``w``) with
    ``exact=False``.
    """
    cfg = cfg or DEFAULT_CONFIG
    y = _as_values(y)
    tau = _as_tau(tau)
    n = len(y)
    if not 0 <= K_target <= n - 1:
        raise ContractViolation(f"K_target must lie in 0..{n - 1}, got {K_target}")
    solve = _Fitter(y, tau, method, cfg)
    hi = lambda_max(y, tau, method)
    if K_target == 0 or hi == 0:
        f = solve(hi)
        return Selection(hi, f, f.n_jumps == K_target)

    lo = 0.0
    if solve(lo).n_jumps >= K_target:
        for _ in range(200):
            if hi - lo <= rel_tol * hi:
                break
            mid = 0.5 * (lo + hi)
            if solve(mid).n_jumps >= K_target:
                lo = mid
            else:
                hi = mid
        for w in np.linspace(lo, hi, refine_points + 2)[1:-1]:
            solve(w)

    hits = [w for w, f in solve.cache.items() if f.n_jumps == K_target]
    if hits:
        w = max(hits)
        return Selection(w, solve.cache[w], True)
    w = min(solve.cache, key=lambda v: (abs(solve.cache[v].n_jumps - K_target), -v))
    return Selection(w, solve.cache[w], False)


def default_grid(y, tau, size: int = 64, span: float = 1000.0, method: str = "qlasso") -> np.ndarray:
    lm = lambda_max(y, tau, method)
    if lm == 0:
        return np.array([0.0])
    return np.geomspace(lm / span, lm, size)


def lambda_oracle_mse(y, u_true_tau, tau, grid: Sequence[float] | None = None,
                      cfg: SolverConfig | None = None, method: str = "qlasso") -> Selection:
    """Grid weight whose fit is closest in mean squared error to the known truth."""
    cfg = cfg or DEFAULT_CONFIG
    y = _as_values(y)
    tau = _as_tau(tau)
    truth = np.asarray(u_true_tau, dtype=float)
    if truth.shape != y.shape:
        raise ContractViolation("truth and signal lengths differ")
    grid = default_grid(y, tau, method=method) if grid is None else np.asarray(grid, dtype=float)
    if len(grid) == 0:
        raise ContractViolation("empty grid")
    solve = _Fitter(y, tau, method, cfg)
    # descending sweep: sparse fits first make better warm starts
    for w in grid[::-1]:
        solve(w)
    best_w, best_mse = None, math.inf
    for w in grid:
        mse = float(np.mean((solve(w).u_hat - truth) ** 2))
        if mse <= best_mse:
            best_w, best_mse = float(w), mse
    return Selection(best_w, solve(best_w), True)


class PathPoint(NamedTuple):
    w: float
    k_hat: int
    objective: float
    changepoints: tuple[int, ...]
    fit: PiecewiseFit


def solution_path(y, tau, grid: Sequence[float], cfg: SolverConfig | None = None,
                  method: str = "qlasso") -> list[PathPoint]:
    """Fit every grid weight in order, warm-starting from the previous fit."""
    cfg = cfg or DEFAULT_CONFIG
    y = _as_values(y)
    tau = _as_tau(tau)
    _check_method(method)
    if len(grid) == 0:
        raise ContractViolation("empty grid")
    out, prev = [], None
    for w in grid:
        if method == "l2lasso":
            f = l2_fused_fit(y, float(w), cfg.jump_tol)
        else:
            f = fit(y, tau, float(w), cfg, warm_start=prev)
        out.append(PathPoint(float(w), f.n_jumps, f.objective, f.changepoints.indices, f))
        prev = f
    return out


def resolve(mode: LambdaMode, y, tau, truth=None, cfg: SolverConfig | None = None,
            method: str = "qlasso") -> Selection:
    """Pick a weight by ``mode`` and return it with its fit."""
    cfg = cfg or DEFAULT_CONFIG
    if isinstance(mode, (Fixed, Asymptotic)):
        w = mode.w if isinstance(mode, Fixed) else lambda_asymptotic(len(_as_values(y)), mode.C)
        f = l2_fused_fit(y, w, cfg.jump_tol) if method == "l2lasso" else fit(y, tau, w, cfg)
        return Selection(w, f, True)
    if isinstance(mode, TargetK):
        return lambda_for_k(y, tau, mode.K, cfg, method=method)
    if isinstance(mode, OracleMSE):
        if truth is None:
            raise ContractViolation("oracle-MSE selection needs the true quantile line")
        grid = mode.grid
        if grid is None:
            grid = default_grid(y, tau, mode.size, mode.span, method)
        return lambda_oracle_mse(y, truth, tau, grid, cfg, method=method)
    raise ContractViolation(f"unknown lambda mode {mode!r}")
