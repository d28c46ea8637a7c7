"""Command-line front end: point queries, sweeps, Monte-Carlo and utility runs.

Exit codes: 0 success, 2 usage or invalid parameters, 3 no bound available, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Sequence

import numpy as np

from . import accountant as acc
from .core_dp import Delta, Direction, gaussian_delta, log_of
from .mc_oracle import default_workers, mc_delta_many
from .utility import UtilityConfig, analytic_mse, calibrate_sigma, simulate_mse

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

SWEEP_HEADER = (
    "vary_name", "vary_value", "direction", "combined",
    "method_decomposition", "method_truncated_poisson", "method_recursive", "method_direct_rdp",
    "baseline_poisson", "baseline_local", "diag_flags",
)
UTILITY_HEADER = ("n", "scheme", "analytic_mse", "empirical_mse", "std_error")
VARY_FIELDS = ("sigma", "t", "k", "epochs", "epsilon", "delta")
_INT_FIELDS = {"t", "k", "epochs"}


class UsageError(Exception):
    pass


def fmt(x: float | None) -> str:
    """17 significant digits; empty for missing values."""
    if x is None:
        return ""
    return "%.17g" % float(x)


def _json_number(x: float | None) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        value = None
    if value is None or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_scheme_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=[s.value for s in acc.Scheme], default="allocation")
    p.add_argument("--sigma", type=float, required=False)
    p.add_argument("--t", type=_positive_int, required=False)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--epochs", type=_positive_int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="Poisson rate (default k/t)")
    p.add_argument("--direction", choices=[d.value for d in Direction], default="both")
    p.add_argument("--methods", default=",".join(m.value for m in acc.Method),
                   help="comma-separated allocation methods")
    p.add_argument("--max-order", type=_positive_int, default=60,
                   help="largest integer RDP order searched")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alloc-accountant", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file; command-line flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, target in (("epsilon", "--delta"), ("delta", "--epsilon")):
        p = sub.add_parser(name, help=f"solve for {name}")
        _add_scheme_args(p)
        p.add_argument(target, type=float, required=False)

    p = sub.add_parser("sweep", help="sweep one parameter, write CSV")
    _add_scheme_args(p)
    p.add_argument("--vary", choices=VARY_FIELDS, required=False)
    p.add_argument("--values", type=_csv_floats)
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--count", type=_positive_int)
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--solve-for", choices=("epsilon", "delta"), default="epsilon")
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("mc", help="Monte-Carlo estimate of delta")
    p.add_argument("--sigma", type=float)
    p.add_argument("--t", type=_positive_int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--direction", choices=("remove", "add"), default="remove")
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("utility", help="Bernoulli mean estimation, write CSV")
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--t", type=_positive_int, default=1000)
    p.add_argument("--sigma", type=float, help="noise for both schemes")
    p.add_argument("--sigma-allocation", type=float)
    p.add_argument("--sigma-poisson", type=float)
    p.add_argument("--calibrate-epsilon", type=float,
                   help="calibrate each scheme's sigma to this epsilon")
    p.add_argument("--calibrate-delta", type=float, default=1e-6)
    p.add_argument("--n-grid", type=_csv_floats, default=[100.0, 1000.0, 10000.0])
    p.add_argument("--trials", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _read_config(path: str) -> list[str]:
    args = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            args += ["--" + key.replace("_", "-"), value]
    return args


def _splice_config(argv: list[str]) -> list[str]:
    """Move ``--config`` entries right after the subcommand so later flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return rest
    extra = _read_config(known.config)
    for i, tok in enumerate(rest):
        if not tok.startswith("-"):
            return rest[: i + 1] + extra + rest[i + 1:]
    return rest + extra


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                    for m in missing))


def _spec(args: argparse.Namespace, **override: Any) -> acc.SchemeSpec:
    fields = {"sigma": args.sigma, "t": args.t, "k": args.k, "epochs": args.epochs}
    fields.update({k: v for k, v in override.items() if k in fields})
    try:
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        return acc.SchemeSpec(args.scheme, fields["sigma"], fields["t"], fields["k"],
                              fields["epochs"], args.lam, args.direction, methods,
                              tuple(range(2, args.max_order + 1)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def result_record(command: str, spec: acc.SchemeSpec, target: float,
                  result: acc.BoundResult) -> dict[str, Any]:
    target_name = "delta" if result.quantity == "epsilon" else "epsilon"
    methods = {}
    for name, o in result.methods.items():
        methods[name] = {
            "feasible": o.feasible,
            "values": None if o.values is None else {s.value: _json_number(v) for s, v in o.values.items()},
            "reason": o.reason,
            "flags": sorted(o.flags),
            "detail": {k: _json_number(v) for k, v in sorted(o.detail.items())},
        }
    record: dict[str, Any] = {
        "command": command,
        "inputs": {
            "scheme": spec.scheme.value, "sigma": spec.sigma, "t": spec.t, "k": spec.k,
            "epochs": spec.epochs, "lambda": spec.poisson_rate if spec.scheme is acc.Scheme.POISSON else None,
            "direction": spec.direction.value, "methods": [m.value for m in spec.methods],
            "max_order": max(spec.orders), target_name: float(target),
        },
        "quantity": result.quantity,
        "value": _json_number(result.value),
        "per_direction": {s.value: _json_number(v) for s, v in result.per_direction.items()},
        "winning_method": result.winning_method,
        "winners": {s.value: m for s, m in result.winners.items()},
        "methods": methods,
        "diagnostics": sorted(result.diagnostics),
    }
    if isinstance(result.value, Delta):
        record["log_value"] = _json_number(result.value.log)
    return record


def cmd_point(args: argparse.Namespace, out) -> int:
    target_name = "delta" if args.command == "epsilon" else "epsilon"
    _require(args, "sigma", "t", target_name)
    spec = _spec(args)
    target = getattr(args, target_name)
    try:
        result = acc.epsilon(spec, target) if args.command == "epsilon" else acc.delta(spec, target)
    except acc.NoBoundAvailable as exc:
        print(json.dumps({"command": args.command, "error": "no bound available",
                          "reasons": exc.reasons}), file=out)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(result_record(args.command, spec, target, result)), file=out)
    return EXIT_OK


def sweep_values(args: argparse.Namespace) -> list[float]:
    if args.values:
        values = list(args.values)
    else:
        _require(args, "start", "stop", "count")
        if args.spacing == "log":
            if args.start <= 0 or args.stop <= 0:
                raise UsageError("log spacing needs positive start and stop")
            values = [float(v) for v in np.geomspace(args.start, args.stop, args.count)]
        else:
            values = [float(v) for v in np.linspace(args.start, args.stop, args.count)]
    if args.vary in _INT_FIELDS:
        values = [float(round(v)) for v in values]
    if not values:
        raise UsageError("sweep needs at least one value")
    diffs = np.diff(values)
    if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise UsageError("sweep values must be strictly monotone")
    return values


_METHOD_COLUMNS = ("decomposition", "truncated_poisson", "recursive", "direct_rdp")


def _side_value(values: dict | None, side: Direction | None) -> float | None:
    if values is None:
        return None
    if side is None:
        return max(values.values(), key=log_of)
    v = values.get(side)
    return None if v is None or not math.isfinite(v) else v


def _sweep_point(args: argparse.Namespace, value: float) -> list[list[str]]:
    override: dict[str, Any] = {}
    target = args.delta if args.solve_for == "epsilon" else args.epsilon
    if args.vary in ("epsilon", "delta"):
        target = value
    else:
        override[args.vary] = int(value) if args.vary in _INT_FIELDS else value
    spec = _spec(args, **override)
    solve = acc.epsilon if args.solve_for == "epsilon" else acc.delta
    try:
        result = solve(spec, target)
    except acc.NoBoundAvailable:
        result = None
    baselines = {}
    for scheme in (acc.Scheme.POISSON, acc.Scheme.LOCAL):
        base = acc.SchemeSpec(scheme, spec.sigma, spec.t, spec.k, spec.epochs, spec.lam,
                              spec.direction, orders=spec.orders)
        try:
            baselines[scheme.value] = solve(base, target)
        except (acc.NoBoundAvailable, ValueError, ArithmeticError):
            baselines[scheme.value] = None
    sides: list[Direction | None] = list(spec.direction.sides)
    if spec.direction is Direction.BOTH:
        sides.append(None)
    rows = []
    for side in sides:
        label = side.value if side is not None else Direction.BOTH.value
        if result is None:
            combined = None
            method_cells = [None] * len(_METHOD_COLUMNS)
            flags = ["no-bound"]
        else:
            combined = result.value if side is None else result.per_direction[side]
            method_cells = []
            for m in _METHOD_COLUMNS:
                o = result.methods.get(m)
                method_cells.append(None if o is None else _side_value(
                    None if o.values is None else dict(o.values), side))
            flags = sorted(result.diagnostics)
        base_cells = []
        for name in ("poisson", "local"):
            b = baselines[name]
            base_cells.append(None if b is None else
                              (b.value if side is None else b.per_direction[side]))
        rows.append([args.vary, fmt(value), label, fmt(combined)]
                    + [fmt(c) for c in method_cells] + [fmt(c) for c in base_cells]
                    + [";".join(flags)])
    return rows


def cmd_sweep(args: argparse.Namespace, out) -> int:
    _require(args, "vary")
    needed = ["sigma", "t"]
    if args.solve_for == "epsilon" and args.vary != "delta":
        needed.append("delta")
    if args.solve_for == "delta" and args.vary != "epsilon":
        needed.append("epsilon")
    if args.vary in needed:
        needed.remove(args.vary)
    _require(args, *needed)
    if (args.solve_for, args.vary) in (("epsilon", "epsilon"), ("delta", "delta")):
        raise UsageError("cannot vary the quantity being solved for")
    values = sweep_values(args)
    workers = args.workers or default_workers()
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                chunks = list(pool.map(lambda v: _sweep_point(args, v), values))
        else:
            chunks = [_sweep_point(args, v) for v in values]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for rows in chunks:
        writer.writerows(rows)
    return _emit(buf.getvalue(), args.out, out)


def _emit(text: str, path: str | None, out) -> int:
    if path is None:
        out.write(text)
        return EXIT_OK
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_mc(args: argparse.Namespace, out) -> int:
    _require(args, "sigma", "t", "epsilon")
    try:
        est = mc_delta_many(args.sigma, args.t, [args.epsilon], args.direction, args.n,
                            args.seed, args.confidence, args.workers)[0]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    record = {
        "command": "mc", "sigma": float(args.sigma), "t": args.t, "epsilon": float(args.epsilon),
        "direction": args.direction, "estimate": est.estimate, "ci_low": est.ci_low,
        "ci_high": est.ci_high, "half_width": est.half_width, "n_samples": est.n_samples,
        "confidence": est.confidence, "seed": est.seed,
    }
    if args.t == 1:
        record["reference_closed_form"] = float(gaussian_delta(args.sigma, args.epsilon))
    print(json.dumps(record), file=out)
    return EXIT_OK


def cmd_utility(args: argparse.Namespace, out) -> int:
    sigmas = {"allocation": args.sigma_allocation, "poisson": args.sigma_poisson}
    for scheme in sigmas:
        if sigmas[scheme] is None:
            if args.calibrate_epsilon is not None:
                try:
                    sigmas[scheme] = calibrate_sigma(scheme, args.t, args.calibrate_epsilon,
                                                     args.calibrate_delta)
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
            else:
                sigmas[scheme] = args.sigma
    if any(s is None for s in sigmas.values()):
        raise UsageError("give --sigma, per-scheme sigmas, or --calibrate-epsilon")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(UTILITY_HEADER)
    for n in args.n_grid:
        if n != int(n) or n < 1:
            raise UsageError(f"n-grid entries must be positive integers, got {n!r}")
        for scheme in ("allocation", "poisson"):
            try:
                cfg = UtilityConfig(scheme, args.p, int(n), args.t, sigmas[scheme], args.trials,
                                    args.seed, args.dim)
                sim = simulate_mse(cfg)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            writer.writerow([int(n), scheme, fmt(analytic_mse(cfg)), fmt(sim.empirical_mse),
                             fmt(sim.std_error)])
    return _emit(buf.getvalue(), args.out, out)


_COMMANDS = {"epsilon": cmd_point, "delta": cmd_point, "sweep": cmd_sweep, "mc": cmd_mc,
             "utility": cmd_utility}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _splice_config(argv)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
