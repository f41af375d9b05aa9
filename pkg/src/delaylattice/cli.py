"""Command-line front end.

Problems are described by a JSON file::

    {
      "dim": 1,
      "delays": [1.0],
      "coefficients": [{"type": "constant", "value": [[0.5]]}],
      "start": 0.0,
      "phi": {"type": "piecewise_linear", "times": [-1, 0], "values": [[2], [1]]},
      "horizon": 3.0,
      "tolerances": {"compat": 1e-9, "resolvent": 1e-9, "certify": 1e-8},
      "seed": 0
    }

Coefficient types are ``constant`` (``value``), ``trig`` (``period`` and
``terms``, each ``{"frequency", "cos", "sin"}`` with angular frequency) and
``piecewise_linear`` (``times``, ``values``).  Complex entries are written
as numbers or as strings such as ``"1+2j"``.  For ``dim = 1`` matrices and
vectors may be given as bare scalars.

CSV goes to ``--out`` (or stdout), report lines to stderr.  Exit codes: 0
success, 1 invalid input or failed validation, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fundamental import FundamentalSolution, SliceError
from .lattice import LatticeError
from .model import (Constant, DelaySystem, DomainError, InitialProblem, PiecewiseLinear, TrigPolynomial,
                    check_compatibility, norm)
from .representation import IncompatibleDataError, certify_equivalence, represent_solution
from .solver import ContinuityError, DirectSolver, IncompatibleDataWarning
from .stability import fit_decay, variation_profile
from .volterra import (GridKernel, NonContractionError, build_resolvent, kernel_from_system,
                       resolvent_residual)

__all__ = ["ConfigError", "Config", "load_config", "parse_config", "run", "main"]

log = logging.getLogger("delaylattice")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2

DEFAULT_TOLERANCES = {"compat": 1e-9, "resolvent": 1e-9, "certify": 1e-8}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    problem: InitialProblem
    horizon: float
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _scalar(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"{where}: cannot parse {x!r} as a complex number") from None
    raise ConfigError(f"{where}: expected a number, got {type(x).__name__}")


def _array(x, shape: tuple, where: str) -> np.ndarray:
    """Nested lists of numbers as a complex array of ``shape``; scalars allowed for 1x1."""
    if not isinstance(x, list):
        if all(n == 1 for n in shape):
            return np.full(shape, _scalar(x, where), dtype=complex)
        raise ConfigError(f"{where}: expected an array of shape {shape}")
    if not shape:
        raise ConfigError(f"{where}: expected a number, got a list")
    if len(x) != shape[0]:
        raise ConfigError(f"{where}: expected {shape[0]} entries, got {len(x)}")
    return np.array([_array(v, shape[1:], f"{where}[{i}]") for i, v in enumerate(x)], dtype=complex)


def _real(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a real number")
    if not math.isfinite(x):
        raise ConfigError(f"{where}: must be finite")
    return float(x)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing field '{key}'")
    return obj[key]


def _signal(spec, shape: tuple, where: str):
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = _require(spec, "type", where)
    try:
        if kind == "constant":
            return Constant(_array(_require(spec, "value", where), shape, f"{where}.value"))
        if kind == "trig":
            period = _real(_require(spec, "period", where), f"{where}.period")
            terms = []
            for k, term in enumerate(_require(spec, "terms", where)):
                tw = f"{where}.terms[{k}]"
                if not isinstance(term, dict):
                    raise ConfigError(f"{tw}: expected an object")
                w = _real(_require(term, "frequency", tw), f"{tw}.frequency")
                c = _array(term.get("cos", 0.0) if shape == (1, 1) else _require(term, "cos", tw),
                           shape, f"{tw}.cos")
                s = _array(term.get("sin", 0.0) if shape == (1, 1) else _require(term, "sin", tw),
                           shape, f"{tw}.sin")
                terms.append((w, c, s))
            return TrigPolynomial(tuple(terms), period)
        if kind == "piecewise_linear":
            times = [_real(v, f"{where}.times[{i}]") for i, v in enumerate(_require(spec, "times", where))]
            values = _require(spec, "values", where)
            if not isinstance(values, list) or len(values) != len(times):
                raise ConfigError(f"{where}.values: need one value per time")
            vals = np.array([_array(v, shape, f"{where}.values[{i}]") for i, v in enumerate(values)])
            return PiecewiseLinear(np.array(times), vals)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}.type: unknown signal type {kind!r}")


def parse_config(data) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    dim = _require(data, "dim", "config")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ConfigError("config.dim: expected a positive integer")
    delays = _require(data, "delays", "config")
    if not isinstance(delays, list) or not delays:
        raise ConfigError("config.delays: expected a non-empty list")
    delays = tuple(_real(v, f"config.delays[{i}]") for i, v in enumerate(delays))
    coeffs = _require(data, "coefficients", "config")
    if not isinstance(coeffs, list) or len(coeffs) != len(delays):
        raise ConfigError("config.coefficients: need one coefficient per delay")
    signals = tuple(_signal(c, (dim, dim), f"config.coefficients[{i}]") for i, c in enumerate(coeffs))
    try:
        system = DelaySystem(dim, delays, signals)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None
    start = _real(data.get("start", 0.0), "config.start")
    phi = _signal(_require(data, "phi", "config"), (dim,), "config.phi")
    tols = dict(DEFAULT_TOLERANCES)
    given = data.get("tolerances", {})
    if not isinstance(given, dict):
        raise ConfigError("config.tolerances: expected an object")
    for key, value in given.items():
        if key not in tols:
            raise ConfigError(f"config.tolerances.{key}: unknown tolerance")
        tols[key] = _real(value, f"config.tolerances.{key}")
        if tols[key] < 0:
            raise ConfigError(f"config.tolerances.{key}: must be nonnegative")
    try:
        problem = InitialProblem(system, start, phi, compat_tol=tols["compat"])
    except ValueError as exc:
        raise ConfigError(f"config.phi: {exc}") from None
    horizon = _real(data.get("horizon", start + 2 * system.max_delay), "config.horizon")
    if horizon < start:
        raise ConfigError("config.horizon: must be >= start")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("config.seed: expected a nonnegative integer")
    return Config(problem, horizon, tols, seed)


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def _complex_cols(values) -> list[str]:
    out = []
    for v in np.asarray(values, dtype=complex).reshape(-1):
        out.extend((_fmt(v.real), _fmt(v.imag)))
    return out


def _complex_header(prefix: str, shape: tuple) -> list[str]:
    cols = []
    for idx in np.ndindex(*shape):
        name = prefix + "_" + "".join(str(i + 1) for i in idx)
        cols.extend((f"re({name})", f"im({name})"))
    return cols


def _write_csv(rows, header, dest):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if dest is None:
        sys.stdout.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)


def _report(line: str):
    print(line, file=sys.stderr)


def _grid(start: float, end: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ConfigError("--step must be positive")
    n = int(math.floor((end - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _t_end(args, cfg: Config) -> float:
    t_end = cfg.horizon if args.t_end is None else args.t_end
    if t_end < cfg.problem.start:
        raise ConfigError("--t-end must be >= start")
    return t_end


def _step(args, cfg: Config) -> float:
    return args.step if args.step is not None else cfg.problem.system.delays[0] / 8


def _compat_tol(args, cfg: Config) -> float:
    return cfg.tolerances["compat"] if args.tol is None else args.tol


def cmd_simulate(args, cfg: Config) -> int:
    p = cfg.problem
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IncompatibleDataWarning)
        solver = DirectSolver(p, tol=_compat_tol(args, cfg))
    for w in caught:
        if issubclass(w.category, IncompatibleDataWarning):
            _report(f"warning: {w.message}")
    traj = solver.sample(_t_end(args, cfg), _step(args, cfg))
    rows = [[_fmt(t)] + _complex_cols(y) for t, y in zip(traj.times, traj.values)]
    _write_csv(rows, ["t"] + _complex_header("y", (p.system.dim,)), args.out)
    if traj.jump_sizes.size:
        k = int(np.argmax(traj.jump_sizes))
        _report(f"largest jump = {traj.jump_sizes[k]:.17g} at t = {_fmt(p.start + traj.jump_offsets[k])}")
    return EXIT_OK


def _indices_field(point) -> str:
    return ";".join(" ".join(str(n) for n in idx) for idx in point.indices)


def cmd_fundamental(args, cfg: Config) -> int:
    p = cfg.problem
    d = p.system.dim
    s = p.start
    t_end = _t_end(args, cfg)
    fs = FundamentalSolution(p.system)
    ts = _grid(s, t_end, _step(args, cfg))
    xs = fs.evaluate(ts, np.full(ts.shape, s))
    rows = [[_fmt(t - s)] + _complex_cols(x) for t, x in zip(ts, xs)]
    _write_csv(rows, ["t_minus_s"] + _complex_header("X", (d, d)), args.out)
    sl = fs.slice(t_end, s)
    atom_rows = [[_fmt(t_end), _fmt(alpha), _fmt(pt.value), _indices_field(pt)] + _complex_cols(jump)
                 for alpha, pt, jump in sl.atoms]
    header = ["t", "alpha", "f_value", "n_indices"] + _complex_header("jump", (d, d))
    if args.out is None:
        sys.stdout.write("\n")
        _write_csv(atom_rows, header, None)
    else:
        out = Path(args.out)
        _write_csv(atom_rows, header, out.with_name(out.stem + ".atoms.csv"))
    _report(f"slice at t = {_fmt(t_end)}: {len(sl.atoms)} atoms, total variation = {sl.total_variation():.17g}")
    return EXIT_OK


def cmd_represent(args, cfg: Config) -> int:
    p = cfg.problem
    ok, residual = check_compatibility(p, _compat_tol(args, cfg))
    if not ok:
        _report(f"error: representation requires compatible data; compatibility residual = {residual:.17g}")
        return EXIT_INVALID
    t_end = _t_end(args, cfg)
    fs = FundamentalSolution(p.system)
    ts = _grid(p.start, t_end, _step(args, cfg))
    direct = DirectSolver(p, warn=False).evaluate(ts)
    rows = []
    for t, yd in zip(ts, direct):
        y = represent_solution(p, float(t), fundamental=fs, check=False)
        rows.append([_fmt(t)] + _complex_cols(y) + [_fmt(norm(y - yd))])
    _write_csv(rows, ["t"] + _complex_header("y", (p.system.dim,)) + ["abs_error"], args.out)
    if args.certify:
        tol = cfg.tolerances["certify"] if args.tol is None else args.tol
        rep = certify_equivalence(p, t_end, args.samples, seed=cfg.seed if args.seed is None else args.seed)
        _report(f"{rep.summary()} (tolerance {tol:.3g})")
        if not rep.max_error <= tol:
            _report("certification failed")
            return EXIT_NUMERIC
        _report("certification passed")
    return EXIT_OK


def cmd_resolvent(args, cfg: Config) -> int:
    p = cfg.problem
    tol = cfg.tolerances["resolvent"] if args.tol is None else args.tol
    kernel = kernel_from_system(p)
    res = build_resolvent(kernel)
    fs = FundamentalSolution(p.system)
    pts = np.linspace(kernel.a, kernel.b, max(args.samples, 2))
    eye = np.eye(p.system.dim)
    rows = []
    worst_res = worst_id = 0.0
    for t in pts:
        for beta in pts:
            r = resolvent_residual(kernel, res, float(t), float(beta))
            ident = norm(res.evaluate(t, beta) - (fs.evaluate(t, beta) - (t >= beta) * eye))
            worst_res = max(worst_res, r)
            worst_id = max(worst_id, ident)
            rows.append([_fmt(t), _fmt(beta), _fmt(r), _fmt(ident)])
    _write_csv(rows, ["t", "beta", "residual", "identity_defect"], args.out)
    _report(f"max resolvent residual = {worst_res:.3e}")
    _report(f"max identity defect = {worst_id:.3e}")
    if args.grid:
        grid = GridKernel.from_atomic(kernel, args.grid)
        gres = build_resolvent(grid)
        _report(f"grid backend: n = {args.grid}, r = {gres.r:.6g}, iterations = {gres.iterations}, "
                f"lambda = {gres.contraction:.3g}")
    if not (worst_res <= tol and worst_id <= tol):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_stability(args, cfg: Config) -> int:
    p = cfg.problem
    t_end = cfg.horizon if args.t_end is None else args.t_end
    if not t_end > p.start + p.system.max_delay:
        raise ConfigError("stability needs t_end > start + tau_N")
    prof = variation_profile(p.system, p.start, t_end, args.samples)
    _write_csv([[_fmt(x), _fmt(v)] for x, v in prof], ["t_minus_s", "V"], args.out)
    try:
        est = fit_decay(prof)
    except ValueError as exc:
        _report(f"fit skipped: {exc}")
        return EXIT_OK
    _report(est.summary())
    return EXIT_OK


def cmd_check(args, cfg: Config) -> int:
    p = cfg.problem
    ok, residual = check_compatibility(p, _compat_tol(args, cfg))
    _report(f"compatibility residual = {residual:.17g}")
    _report(f"compatible: {'yes' if ok else 'no'}")
    kernel = kernel_from_system(p)
    knorm = kernel.norm()
    near = kernel.variation_near_diagonal(0.5 * kernel.eta)
    _report(f"kernel norm = {knorm:.17g}")
    _report(f"kernel variation within eta/2 of the diagonal = {near:.17g} (eta = {kernel.eta:.17g})")
    bounded = math.isfinite(knorm) and near == 0.0
    _report(f"kernel type check: {'ok' if bounded else 'failed'}")
    return EXIT_OK if ok and bounded else EXIT_INVALID


COMMANDS = {
    "simulate": (cmd_simulate, "sample the solution on [start, t_end]"),
    "fundamental": (cmd_fundamental, "tabulate X(t, start) and the slice atoms at t_end"),
    "represent": (cmd_represent, "evaluate the integral representation of the solution"),
    "resolvent": (cmd_resolvent, "residuals of the resolvent equation on the first window"),
    "stability": (cmd_stability, "total-variation profile and decay fit"),
    "check": (cmd_check, "compatibility of the initial data and kernel checks"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delay-lattice",
                                     description="Linear difference-delay systems and their fundamental solution.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, metavar="PATH", help="JSON problem description")
        sp.add_argument("--out", metavar="PATH", help="CSV output file (default: stdout)")
        sp.add_argument("--t-end", type=float, metavar="R", help="end time (default: config horizon)")
        sp.add_argument("--step", type=float, metavar="R", help="sampling step (default: tau_1 / 8)")
        sp.add_argument("--samples", type=int, default=64, metavar="K", help="number of samples")
        sp.add_argument("--seed", type=int, metavar="U64", help="seed for randomized sampling")
        sp.add_argument("--tol", type=float, metavar="R", help="override the relevant tolerance")
        if name == "represent":
            sp.add_argument("--certify", action="store_true", help="compare with the direct solver")
        if name == "resolvent":
            sp.add_argument("--grid", type=int, metavar="N", help="also build an N-cell grid resolvent")
    return parser


def _setup_logging():
    level = os.environ.get("DELAY_LATTICE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("delaylattice").setLevel(levels[level])


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    _setup_logging()
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        return func(args, cfg)
    except (ConfigError, IncompatibleDataError, DomainError, LatticeError) as exc:
        _report(f"error: {exc}")
        return EXIT_INVALID
    except (NonContractionError, ContinuityError, SliceError) as exc:
        _report(f"numerical failure: {exc}")
        return EXIT_NUMERIC


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
