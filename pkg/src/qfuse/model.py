"""Domain types, the penalized check-loss objective and change-point bookkeeping.

Indices exposed by this module are 1-based: a change-point ``t`` marks the
first observation of a new segment, i.e. ``u[t] != u[t - 1]`` in 1-based
terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ERROR_LAWS = ("normal", "student3", "cauchy", "zero")


class ContractViolation(ValueError):
    """Raised when an input breaks a documented precondition."""


def _as_tau(tau) -> float:
    tau = float(getattr(tau, "tau", tau))
    if not 0.0 < tau < 1.0:
        raise ContractViolation(f"tau must lie strictly inside (0, 1), got {tau}")
    return tau


def _as_values(y) -> np.ndarray:
    y = np.asarray(getattr(y, "values", y), dtype=float)
    if y.ndim != 1:
        raise ContractViolation(f"expected a 1-D signal, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ContractViolation("signal contains non-finite values")
    return y


@dataclass(frozen=True)
class Signal:
    values: np.ndarray

    def __post_init__(self):
        values = _as_values(self.values)
        if len(values) < 2:
            raise ContractViolation(f"a signal needs at least 2 observations, got {len(values)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class QuantileSpec:
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "tau", _as_tau(self.tau))


@dataclass(frozen=True)
class ChangePointSet:
    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation(f"change-points must be strictly increasing: {idx}")
        if idx and (idx[0] < 2 or idx[-1] > self.n):
            raise ContractViolation(f"change-points must lie in 2..{self.n}: {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, t):
        return t in self.indices


@dataclass(frozen=True)
class PiecewiseFit:
    u_hat: np.ndarray
    changepoints: ChangePointSet
    levels: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = True
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    # scaled dual of the splitting iteration, kept for warm starts
    dual: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_jumps(self) -> int:
        return len(self.changepoints)


@dataclass(frozen=True)
class Scenario:
    """Ground-truth piecewise-constant model.

    ``rel_breaks`` are break positions on the unit interval; the integer
    break for sample size ``n`` is ``floor(rel * n) + 1``.
    """

    rel_breaks: tuple[float, ...]
    seg_levels: tuple[float, ...]
    n: int
    error_law: str = "normal"

    def __post_init__(self):
        rb = tuple(float(r) for r in self.rel_breaks)
        lv = tuple(float(m) for m in self.seg_levels)
        object.__setattr__(self, "rel_breaks", rb)
        object.__setattr__(self, "seg_levels", lv)
        if len(lv) != len(rb) + 1:
            raise ContractViolation("need exactly one more level than breaks")
        if any(not 0.0 < r < 1.0 for r in rb) or any(b <= a for a, b in zip(rb, rb[1:])):
            raise ContractViolation(f"relative breaks must increase inside (0, 1): {rb}")
        if any(a == b for a, b in zip(lv, lv[1:])):
            raise ContractViolation("adjacent segment levels must differ")
        if self.error_law not in ERROR_LAWS:
            raise ContractViolation(f"unknown error law {self.error_law!r}")
        bk = self.breaks
        if any(b <= a for a, b in zip(bk, bk[1:])) or (bk and (bk[0] < 2 or bk[-1] > self.n)):
            raise ContractViolation(f"n={self.n} too small to separate breaks {bk}")

    @classmethod
    def sim1(cls, n: int, error_law: str = "normal") -> Scenario:
        """Three segments at levels 0, 2, 1 with breaks at 0.2 and 0.7."""
        return cls((0.2, 0.7), (0.0, 2.0, 1.0), n, error_law)

    @property
    def breaks(self) -> tuple[int, ...]:
        return tuple(math.floor(r * self.n) + 1 for r in self.rel_breaks)

    @property
    def n_breaks(self) -> int:
        return len(self.rel_breaks)


def check_loss(v, tau):
    """Check (pinball) loss ``v * (tau - 1{v < 0})``, elementwise."""
    tau = _as_tau(tau)
    v = np.asarray(v, dtype=float)
    out = np.where(v < 0, v * (tau - 1.0), v * tau)
    return out[()] if out.ndim == 0 else out


def objective_value(y, u, tau, w: float) -> float:
    """Sum of check losses of ``y - u`` plus ``w`` times the total variation of ``u``."""
    y = _as_values(y)
    u = np.asarray(u, dtype=float)
    if u.shape != y.shape:
        raise ContractViolation(f"length mismatch: len(u)={len(u)} vs n={len(y)}")
    if not w >= 0:
        raise ContractViolation(f"w must be nonnegative, got {w}")
    return float(np.sum(check_loss(y - u, tau)) + w * np.sum(np.abs(np.diff(u))))


def default_jump_tol(u) -> float:
    u = np.asarray(u, dtype=float)
    return 1e-8 * (1.0 + (float(np.max(np.abs(u))) if len(u) else 0.0))


def extract_changepoints(u, jump_tol: float | None = None) -> ChangePointSet:
    u = np.asarray(u, dtype=float)
    if jump_tol is None:
        jump_tol = default_jump_tol(u)
    idx = np.flatnonzero(np.abs(np.diff(u)) > jump_tol) + 2
    return ChangePointSet(tuple(idx.tolist()), len(u))


def segment_levels(u, cps: ChangePointSet | Sequence[int], jump_tol: float | None = None) -> np.ndarray:
    """Value of ``u`` at the first index of each segment delimited by ``cps``."""
    u = np.asarray(u, dtype=float)
    indices = tuple(getattr(cps, "indices", cps))
    found = extract_changepoints(u, jump_tol).indices
    if found != indices:
        raise ContractViolation(f"change-points {indices} inconsistent with u (found {found})")
    starts = np.array((1,) + indices, dtype=int) - 1
    return u[starts].copy()


def set_distance(a, b) -> float:
    """One-sided set distance ``sup_{x in b} inf_{z in a} |z - x|``.

    Returns 0 for empty ``b`` and infinity for empty ``a`` with nonempty ``b``.
    """
    a = np.asarray(sorted(set(getattr(a, "indices", a))), dtype=float)
    b = np.asarray(sorted(set(getattr(b, "indices", b))), dtype=float)
    if len(b) == 0:
        return 0.0
    if len(a) == 0:
        return math.inf
    return float(np.max(np.min(np.abs(a[None, :] - b[:, None]), axis=1)))


def piecewise_signal(n: int, breaks: Sequence[int], levels: Sequence[float]) -> np.ndarray:
    """Piecewise-constant vector of length ``n`` with 1-based segment starts ``breaks``."""
    if len(levels) != len(breaks) + 1:
        raise ContractViolation("need exactly one more level than breaks")
    bounds = [0] + [b - 1 for b in breaks] + [n]
    return np.repeat(np.asarray(levels, dtype=float), np.diff(bounds))


def scenario_truth(s: Scenario, tau) -> tuple[np.ndarray, np.ndarray, ChangePointSet]:
    """Mean truth, quantile-shifted truth ``u* + F^-1(tau)`` and the true break set."""
    from .distributions import icdf

    tau = _as_tau(tau)
    u_star = piecewise_signal(s.n, s.breaks, s.seg_levels)
    shift = 0.0 if s.error_law == "zero" else float(icdf(s.error_law, tau))
    return u_star, u_star + shift, ChangePointSet(s.breaks, s.n)
