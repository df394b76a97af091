"""Monte Carlo harness: seeded error streams, per-replication metrics and
per-cell aggregation.

Each replication draws one error vector from a counter-based generator keyed
by ``(master_seed, rep_index)``. Every cell (method, quantile level, penalty
mode) of that replication sees the same errors, so cell comparisons are
paired, and results do not depend on how replications are scheduled.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .distributions import icdf
from .model import ContractViolation, ERROR_LAWS, Scenario, _as_tau, scenario_truth
from .solver import SolverConfig
from .tuning import METHODS, LambdaMode, resolve

_U64 = (1 << 64) - 1


def stream_seed(master_seed: int, rep_index: int) -> int:
    """64-bit key of the error stream for one replication."""
    if not 0 <= master_seed <= _U64:
        raise ContractViolation(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    if rep_index < 0:
        raise ContractViolation(f"rep_index must be nonnegative, got {rep_index}")
    ss = np.random.SeedSequence(master_seed, spawn_key=(rep_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def uniform_stream(n: int, seed: int) -> np.ndarray:
    """``n`` uniforms on the open interval (0, 1).

    Philox is counter based: draw ``i`` depends only on ``(seed, i)``.
    """
    if n < 0:
        raise ContractViolation(f"n must be nonnegative, got {n}")
    raw = np.random.Philox(key=int(seed) & _U64).random_raw(n)
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


def sample_errors(law: str, n: int, seed: int) -> np.ndarray:
    """Inverse-CDF draws for ``law`` from the uniform stream keyed by ``seed``."""
    if law not in ERROR_LAWS:
        raise ContractViolation(f"unknown error law {law!r}")
    if n < 1:
        raise ContractViolation(f"n must be positive, got {n}")
    u = uniform_stream(n, seed)
    return np.atleast_1d(icdf(law, u)).astype(float)


def detection_error(cps_hat, cps_true, n: int) -> float | None:
    """Mean distance from each true break to its nearest estimate, over ``n``.

    ``None`` when fewer breaks were estimated than exist.
    """
    hat = np.asarray(tuple(getattr(cps_hat, "indices", cps_hat)), dtype=float)
    true = np.asarray(tuple(getattr(cps_true, "indices", cps_true)), dtype=float)
    if len(true) == 0:
        raise ContractViolation("true change-point set must be nonempty")
    if n < 1:
        raise ContractViolation(f"n must be positive, got {n}")
    if len(hat) < len(true):
        return None
    d = np.min(np.abs(hat[None, :] - true[:, None]), axis=1)
    return float(np.mean(d) / n)


class Cell(NamedTuple):
    method: str
    tau: float
    mode: LambdaMode


@dataclass(frozen=True)
class StudyConfig:
    scenario: Scenario
    taus: tuple[float, ...]
    modes: tuple[LambdaMode, ...]
    methods: tuple[str, ...] = ("qlasso",)
    reps: int = 200
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(algorithm="dp"))

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(_as_tau(t) for t in self.taus))
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not (self.taus and self.modes and self.methods):
            raise ContractViolation("taus, modes and methods must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise ContractViolation(f"unknown method {m!r}")
        if self.reps < 1:
            raise ContractViolation(f"reps must be at least 1, got {self.reps}")
        if not 0 <= self.master_seed <= _U64:
            raise ContractViolation("master seed must be a 64-bit unsigned integer")

    @property
    def cells(self) -> tuple[Cell, ...]:
        return tuple(Cell(m, t, md) for m, t, md in itertools.product(self.methods, self.taus, self.modes))


@dataclass(frozen=True)
class RepResult:
    bias: float
    mse: float
    detection_error: float | None
    n_jumps: int
    lambda_used: float
    converged: bool
    # whether a target-count mode hit its count exactly
    exact: bool = True


def _replication_errors(cfg: StudyConfig, rep_index: int) -> np.ndarray:
    s = cfg.scenario
    if s.error_law == "zero":
        return np.zeros(s.n)
    return sample_errors(s.error_law, s.n, stream_seed(cfg.master_seed, rep_index))


def _evaluate(cfg: StudyConfig, cell: Cell, eps: np.ndarray) -> RepResult:
    u_star, u_tau, cps_true = scenario_truth(cfg.scenario, cell.tau)
    y = u_star + eps
    sel = resolve(cell.mode, y, cell.tau, truth=u_tau, cfg=cfg.solver, method=cell.method)
    diff = sel.fit.u_hat - u_tau
    return RepResult(
        bias=float(np.mean(diff)),
        mse=float(np.mean(diff * diff)),
        detection_error=detection_error(sel.fit.changepoints, cps_true, cfg.scenario.n),
        n_jumps=sel.fit.n_jumps,
        lambda_used=float(sel.w),
        converged=sel.fit.converged,
        exact=sel.exact,
    )


def run_replication(cfg: StudyConfig, cell: Cell, rep_index: int) -> RepResult:
    """One replication of one cell; errors depend only on the seed and ``rep_index``."""
    return _evaluate(cfg, cell, _replication_errors(cfg, rep_index))


def _run_rep_all_cells(cfg: StudyConfig, rep_index: int) -> list[RepResult]:
    eps = _replication_errors(cfg, rep_index)
    return [_evaluate(cfg, cell, eps) for cell in cfg.cells]


@dataclass(frozen=True)
class CellSummary:
    method: str
    law: str
    n: int
    tau: float
    mode: str
    lambda_mean: float
    lambda_sd: float
    bias_mean: float
    bias_sd: float
    mse_mean: float
    mse_sd: float
    det_err_mean: float
    det_err_sd: float
    det_err_excluded: int
    jumps_min: int
    jumps_med: float
    jumps_max: int
    reps: int
    seed: int
    n_unconverged: int = 0
    n_inexact: int = 0


@dataclass(frozen=True)
class StudySummary:
    cells: tuple[CellSummary, ...]
    # replications reuse one error draw across all cells
    paired: bool = True


def _sd(x: np.ndarray) -> float:
    if len(x) < 2 or np.all(x == x[0]):
        return 0.0
    return float(np.std(x, ddof=1))


def summarize(cfg: StudyConfig, cell: Cell, results: Sequence[RepResult]) -> CellSummary:
    """Aggregate replications in the given (replication) order."""
    lam = np.array([r.lambda_used for r in results])
    bias = np.array([r.bias for r in results])
    mse = np.array([r.mse for r in results])
    det = np.array([r.detection_error for r in results if r.detection_error is not None])
    jumps = np.array([r.n_jumps for r in results])
    return CellSummary(
        method=cell.method,
        law=cfg.scenario.error_law,
        n=cfg.scenario.n,
        tau=cell.tau,
        mode=cell.mode.label,
        lambda_mean=float(np.mean(lam)),
        lambda_sd=_sd(lam),
        bias_mean=float(np.mean(bias)),
        bias_sd=_sd(bias),
        mse_mean=float(np.mean(mse)),
        mse_sd=_sd(mse),
        det_err_mean=float(np.mean(det)) if len(det) else math.nan,
        det_err_sd=_sd(det) if len(det) else math.nan,
        det_err_excluded=len(results) - len(det),
        jumps_min=int(jumps.min()),
        jumps_med=float(np.median(jumps)),
        jumps_max=int(jumps.max()),
        reps=len(results),
        seed=cfg.master_seed,
        n_unconverged=sum(not r.converged for r in results),
        n_inexact=sum(not r.exact for r in results),
    )


def default_threads() -> int:
    env = os.environ.get("QFUSE_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError:
            raise ContractViolation(f"QFUSE_THREADS must be an integer, got {env!r}") from None
        if k < 1:
            raise ContractViolation(f"QFUSE_THREADS must be positive, got {k}")
        return k
    return os.cpu_count() or 1


def run_study(cfg: StudyConfig, threads: int | None = None) -> StudySummary:
    """Run every cell for every replication and aggregate per cell.

    Replications may run concurrently; results are collected by replication
    index before aggregation, so the summary does not depend on ``threads``.
    """
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ContractViolation(f"threads must be positive, got {threads}")
    reps = range(cfg.reps)
    if threads == 1 or cfg.reps == 1:
        per_rep = [_run_rep_all_cells(cfg, r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(lambda r: _run_rep_all_cells(cfg, r), reps))
    return StudySummary(tuple(
        summarize(cfg, cell, [rr[k] for rr in per_rep]) for k, cell in enumerate(cfg.cells)
    ))
