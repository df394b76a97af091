"""Command-line front end.

Subcommands: ``fit`` (JSON), ``simulate`` (CSV), ``path`` (TSV) and
``certify`` (JSON). Exit codes: 0 success, 1 certification failure,
2 input or usage error, 3 contract violation.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .model import ContractViolation, Scenario, Signal
from .sim import StudyConfig, run_study
from .solver import SolverConfig, kkt_certificate
from .tuning import Asymptotic, Fixed, OracleMSE, TargetK, default_grid, parse_mode, resolve, solution_path

EXIT_OK, EXIT_CERT_FAILED, EXIT_INPUT, EXIT_CONTRACT = 0, 1, 2, 3

SCHEMA_FIT = "qfuse.fit/1"
SCHEMA_CERT = "qfuse.certificate/1"
SCHEMA_SIM = "qfuse.simulate/1"
SCHEMA_PATH = "qfuse.path/1"

SIM_COLUMNS = (
    "method", "dist", "n", "tau", "mode", "lambda_mean", "lambda_sd", "bias_mean", "bias_sd",
    "mse_mean", "mse_sd", "det_err_mean", "det_err_sd", "det_err_excluded",
    "jumps_min", "jumps_med", "jumps_max", "reps", "seed",
)

# command-line distribution names -> error laws
DISTS = {"normal": "normal", "t3": "student3", "cauchy": "cauchy"}
_LAW_NAMES = {v: k for k, v in DISTS.items()}

BUILTIN_DEFAULTS = {
    "tau": "0.5",
    "mode": "as:10",
    "rho": "1.0",
    "tol_primal": "1e-8",
    "tol_dual": "1e-8",
    "max_iter": "200000",
    "method": "qlasso",
    "reps": "200",
    "seed": "0",
    "grid": "20",
}


class InputError(Exception):
    """Malformed input or usage; maps to exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ---------------------------------------------------------------- input


def parse_signal(text: str) -> np.ndarray:
    """One numeric column; an optional header is a non-numeric first line."""
    lines = text.replace("\r\n", "\n").split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    values = []
    for lineno, raw in enumerate(lines, start=1):
        cell = raw.strip()
        try:
            v = float(cell)
        except ValueError:
            if lineno == 1 and not values:
                continue
            raise InputError(f"line {lineno}: cannot parse {raw!r} as a number") from None
        if not math.isfinite(v):
            raise InputError(f"line {lineno}: non-finite value {raw!r}")
        values.append(v)
    if not values:
        raise InputError("input contains no numeric rows")
    return np.array(values)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def read_defaults(path: str | None) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments ignored."""
    out = dict(BUILTIN_DEFAULTS)
    if path is None:
        return out
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _setting(args, defaults, key, conv):
    value = getattr(args, key, None)
    if value is None:
        value = defaults.get(key)
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise InputError(f"bad value for {key}: {value!r}") from None


# ---------------------------------------------------------------- output


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt6(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NA"
    return format(x, ".6g")


def _certificate_doc(report) -> dict:
    return {
        "passed": report.passed,
        "jointly_feasible": report.jointly_feasible,
        **report.violations(),
    }


# ---------------------------------------------------------------- commands


def _solver_config(args, defaults, algorithm_default: str) -> SolverConfig:
    algorithm = args.algorithm or defaults.get("algorithm") or algorithm_default
    jump_tol = _setting(args, defaults, "jump_tol", lambda v: None if v is None else float(v))
    return SolverConfig(
        rho=_setting(args, defaults, "rho", float),
        tol_primal=_setting(args, defaults, "tol_primal", float),
        tol_dual=_setting(args, defaults, "tol_dual", float),
        max_iter=_setting(args, defaults, "max_iter", int),
        jump_tol=jump_tol,
        algorithm=algorithm,
    )


def _fit_mode(args, defaults):
    if args.lam is not None:
        return Fixed(args.lam)
    if args.target_k is not None:
        return TargetK(args.target_k)
    if args.asymptotic is not None:
        return Asymptotic(args.asymptotic)
    mode = parse_mode(args.mode or defaults["mode"])
    if isinstance(mode, OracleMSE):
        raise InputError("mode 'mse' needs the true signal and is only available in simulate")
    return mode


def cmd_fit(args, out) -> int:
    defaults = read_defaults(args.defaults)
    y = Signal(parse_signal(_read_text(args.input))).values
    tau = _setting(args, defaults, "tau", float)
    cfg = _solver_config(args, defaults, algorithm_default="admm")
    mode = _fit_mode(args, defaults)
    sel = resolve(mode, y, tau, cfg=cfg)
    f = sel.fit
    report = kkt_certificate(y, f, tau, sel.w, jump_tol=cfg.jump_tol)
    doc = {
        "schema": SCHEMA_FIT,
        "n": len(y),
        "tau": tau,
        "lambda_mode": mode.label,
        "lambda": sel.w,
        "lambda_exact": sel.exact,
        "algorithm": cfg.algorithm,
        "converged": f.converged,
        "iterations": f.iterations,
        "objective": f.objective,
        "changepoints": list(f.changepoints.indices),
        "levels": [float(v) for v in f.levels],
        "certificate": _certificate_doc(report),
    }
    if args.full:
        doc["u_hat"] = [float(v) for v in f.u_hat]
    out.write(dumps(doc) + "\n")
    return EXIT_OK


def _csv_list(text, conv, name):
    try:
        items = [conv(t.strip()) for t in text.split(",") if t.strip()]
    except (ValueError, KeyError):
        raise InputError(f"bad --{name} value {text!r}") from None
    if not items:
        raise InputError(f"--{name} needs at least one value")
    return items


def _dist(name):
    if name not in DISTS:
        raise InputError(f"unknown distribution {name!r}; choose from {', '.join(DISTS)}")
    return DISTS[name]


def cmd_simulate(args, out) -> int:
    defaults = read_defaults(args.defaults)
    if args.scenario != "sim1":
        raise InputError(f"unknown scenario {args.scenario!r}")
    law = _dist(args.dist)
    taus = _csv_list(args.tau or defaults["tau"], float, "tau")
    modes = _csv_list(args.mode or defaults["mode"], parse_mode, "mode")
    methods = _csv_list(args.method or defaults["method"], str, "method")
    reps = _setting(args, defaults, "reps", int)
    seed = _setting(args, defaults, "seed", int)
    cfg = StudyConfig(
        scenario=Scenario.sim1(args.n, law),
        taus=tuple(taus),
        modes=tuple(modes),
        methods=tuple(methods),
        reps=reps,
        master_seed=seed,
        solver=_solver_config(args, defaults, algorithm_default="dp"),
    )
    summary = run_study(cfg, threads=args.threads)
    buf = io.StringIO()
    buf.write(",".join(SIM_COLUMNS) + "\n")
    for c in summary.cells:
        row = [
            c.method, _LAW_NAMES[c.law], str(c.n), _fmt6(c.tau), c.mode,
            _fmt6(c.lambda_mean), _fmt6(c.lambda_sd), _fmt6(c.bias_mean), _fmt6(c.bias_sd),
            _fmt6(c.mse_mean), _fmt6(c.mse_sd), _fmt6(c.det_err_mean), _fmt6(c.det_err_sd),
            str(c.det_err_excluded), str(c.jumps_min), _fmt6(c.jumps_med), str(c.jumps_max),
            str(c.reps), str(c.seed),
        ]
        buf.write(",".join(row) + "\n")
    buf.write(f"# schema={SCHEMA_SIM} paired_errors={str(summary.paired).lower()}\n")
    out.write(buf.getvalue())
    return EXIT_OK


def cmd_path(args, out) -> int:
    defaults = read_defaults(args.defaults)
    y = Signal(parse_signal(_read_text(args.input))).values
    tau = _setting(args, defaults, "tau", float)
    cfg = _solver_config(args, defaults, algorithm_default="dp")
    if args.lambdas is not None:
        grid = _csv_list(args.lambdas, float, "lambdas")
        if any(not w >= 0 for w in grid):
            raise InputError("--lambdas values must be nonnegative")
    else:
        size = _setting(args, defaults, "grid", int)
        if size < 1:
            raise InputError("--grid must be positive")
        grid = list(default_grid(y, tau, size=size))
    buf = io.StringIO()
    buf.write("lambda\tk_hat\tobjective\tchangepoints\n")
    for p in solution_path(y, tau, grid, cfg):
        buf.write(f"{_num(p.w)}\t{p.k_hat}\t{_num(p.objective)}\t{';'.join(map(str, p.changepoints))}\n")
    buf.write(f"# schema={SCHEMA_PATH}\n")
    out.write(buf.getvalue())
    return EXIT_OK


def cmd_certify(args, out) -> int:
    y = parse_signal(_read_text(args.input))
    try:
        doc = json.loads(_read_text(args.fit))
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.fit}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    try:
        u = np.asarray(doc["u_hat"], dtype=float)
        tau = float(doc["tau"])
        w = float(doc["lambda"])
    except (KeyError, TypeError, ValueError):
        raise InputError(f"{args.fit}: needs numeric 'u_hat', 'tau' and 'lambda' (fit with --full)") from None
    if u.ndim != 1 or len(u) != len(y):
        raise ContractViolation(f"fit has {u.size} values but the signal has {len(y)}")
    report = kkt_certificate(y, u, tau, w, tol_res=args.tol_res, tol_cert=args.tol_cert)
    body = {"schema": SCHEMA_CERT, "n": len(y), "tau": tau, "lambda": w, **_certificate_doc(report)}
    if args.bounds:
        body["per_index_bounds"] = [list(b) for b in report.per_index_bounds]
    out.write(dumps(body) + "\n")
    return EXIT_OK if report.passed else EXIT_CERT_FAILED


# ---------------------------------------------------------------- parser


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--algorithm", choices=("admm", "dp"))
    g.add_argument("--rho", type=float)
    g.add_argument("--tol-primal", dest="tol_primal", type=float)
    g.add_argument("--tol-dual", dest="tol_dual", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--jump-tol", dest="jump_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qfuse", description="Quantile fused-LASSO change-point estimation.")
    parser.add_argument("--version", action="version", version=f"qfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one signal and print a JSON document")
    p.add_argument("input", help="CSV file with one numeric column, or - for stdin")
    p.add_argument("--tau", type=float)
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, help="fixed penalty weight")
    lam.add_argument("--target-k", dest="target_k", type=int, help="largest weight giving K change-points")
    lam.add_argument("--asymptotic", type=float, metavar="C", help="C * sqrt(log n / n)")
    lam.add_argument("--mode", help="as:C, k:K or fixed:w")
    p.add_argument("--full", action="store_true", help="include the fitted values")
    p.add_argument("--defaults", help="key=value defaults file")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo study, one CSV row per cell")
    p.add_argument("--scenario", default="sim1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", default="normal")
    p.add_argument("--tau", help="comma-separated quantile levels")
    p.add_argument("--mode", help="comma-separated: as:C, k:K, mse")
    p.add_argument("--method", help="comma-separated: qlasso, l2lasso")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: QFUSE_THREADS or CPU count)")
    p.add_argument("--defaults", help="key=value defaults file")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("path", help="solution path over a weight grid, as TSV")
    p.add_argument("input", help="CSV file with one numeric column, or - for stdin")
    p.add_argument("--tau", type=float)
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--grid", type=int, help="number of log-spaced weights up to the constant-fit threshold")
    grid.add_argument("--lambdas", help="explicit comma-separated weights")
    p.add_argument("--defaults", help="key=value defaults file")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_path)

    p = sub.add_parser("certify", help="check a fit document against the optimality conditions")
    p.add_argument("input", help="the signal the fit was computed from")
    p.add_argument("fit", help="JSON produced by 'fit --full'")
    p.add_argument("--tol-res", dest="tol_res", type=float, default=1e-6)
    p.add_argument("--tol-cert", dest="tol_cert", type=float, default=1e-6)
    p.add_argument("--bounds", action="store_true", help="include per-index suffix-sum bounds")
    p.set_defaults(handler=cmd_certify)
    return parser


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args, out)
    except InputError as exc:
        err.write(f"qfuse: error: {exc}\n")
        return EXIT_INPUT
    except ContractViolation as exc:
        err.write(f"qfuse: contract violation: {exc}\n")
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
