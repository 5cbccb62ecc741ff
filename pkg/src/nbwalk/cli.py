"""``nbw`` command line.

Every run echoes its configuration: CSV output starts with a ``# {json}``
header line, JSON output carries ``"schema": 1`` and a ``"config"`` object.

Exit codes: 0 success, 1 bound or check violation, 2 usage error,
3 horizon or resource cap reached.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, audit, exact_count, greens, spectral, torus
from .lattice import TorusSpec, parse_step_set, step_transform
from .sampler_clt import CovarianceTarget, empirical_covariance, sample_endpoints, sample_paths

SCHEMA = 1
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    format: str = "csv"
    output: str | None = None

    def header(self, timestamp: bool) -> dict:
        out = {"schema": SCHEMA, "version": __version__, "config": asdict(self)}
        if timestamp:
            out["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return out


# -- formatting -------------------------------------------------------------------------------------

def fmt(v) -> str:
    """Lossless scalar formatting: integers as integers, rationals as ``p/q``, floats round-trip."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if v is None:
        return ""
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Fraction):
        return fmt(v)
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


class Output:
    def __init__(self, config: RunConfig, timestamp: bool):
        self.config = config
        self.timestamp = timestamp

    def emit(self, rows: list[list], columns: list[str], result: dict | None = None) -> None:
        cfg = self.config
        if cfg.format == "json":
            doc = self.config.header(self.timestamp)
            doc["columns"] = columns
            doc["rows"] = [[_jsonable(c) if not isinstance(c, float) else c for c in r] for r in rows]
            if result is not None:
                doc["result"] = _jsonable(result)
            text = json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"
        else:
            buf = io.StringIO()
            header = self.config.header(self.timestamp)
            if result is not None:
                header["result"] = _jsonable(result)
            buf.write("# " + json.dumps(_jsonable(header), sort_keys=True) + "\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(c) if not isinstance(c, str) else c for c in r])
            text = buf.getvalue()
        if cfg.output:
            Path(cfg.output).write_text(text)
        else:
            sys.stdout.write(text)


# -- argument types ------------------------------------------------------------------------------

def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _parse_expr(text: str) -> float:
    t = text.strip().lower().replace(" ", "")
    sign = -1.0 if t.startswith("-") else 1.0
    t = t.lstrip("+-")
    if "pi" in t:
        num, _, den = t.partition("/")
        coef = num.replace("*", "").replace("pi", "")
        value = (float(coef) if coef else 1.0) * math.pi
        return sign * value / (float(den) if den else 1.0)
    return sign * float(t)


def wave(text: str) -> np.ndarray:
    """Comma-separated components; ``pi``, ``pi/2``, ``2pi/3`` accepted."""
    try:
        return np.array([_parse_expr(c) for c in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse wave vector {text!r}")


def complex_number(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse complex number {text!r}")


# -- subcommands ------------------------------------------------------------------------------------

def cmd_counts(args, out: Output) -> int:
    s = parse_step_set(args.step_set, args.dim)
    try:
        field_n = exact_count.count_walks(s, args.n, cap=args.cap)
    except exact_count.CapExceeded as exc:
        print(f"nbw counts: {exc}", file=sys.stderr)
        return EXIT_CAP
    coords = [f"x{i + 1}" for i in range(s.dim)]
    if args.directed:
        rows = []
        for j in range(s.degree):
            for x in sorted(field_n.as_dict()):
                c = field_n.directed(j, x)
                if c:
                    rows.append(list(x) + [j, c])
        out.emit(rows, coords + ["direction", "count"], {"total": field_n.total()})
    else:
        rows = [list(x) + [c] for x, c in sorted(field_n.items())]
        out.emit(rows, coords + ["count"], {"total": field_n.total()})
    return EXIT_OK


def cmd_spectrum(args, out: Output) -> int:
    s = parse_step_set(args.step_set, args.dim)
    if args.grid:
        ks = TorusSpec(s.dim, args.grid).dual_grid()
    elif args.k:
        ks = args.k
    else:
        ks = [np.zeros(s.dim)]
    rows = []
    for k in ks:
        if len(k) != s.dim:
            raise UsageError(f"wave {list(k)} has {len(k)} components, expected {s.dim}")
        pair = spectral.dominant_eigenvalues(s, k)
        rows.append([*map(float, k), pair.step_hat,
                     pair.lambda_plus.real, pair.lambda_plus.imag,
                     pair.lambda_minus.real, pair.lambda_minus.imag,
                     abs(pair.lambda_plus), spectral.dominant_modulus_bound(pair.step_hat, s.degree),
                     spectral.eigenvalue_bound(s, k), pair.degenerate])
    cols = [f"k{i + 1}" for i in range(s.dim)] + [
        "D_hat", "lambda_plus_re", "lambda_plus_im", "lambda_minus_re", "lambda_minus_im",
        "abs_lambda_plus", "modulus_bound", "ratio_bound", "degenerate"]
    out.emit(rows, cols, {"points": len(rows), "degenerate_points": sum(r[-1] for r in rows)})
    return EXIT_OK


def _family(args) -> torus.Family:
    if args.family == "hypercube":
        if args.m is None:
            raise UsageError("--family hypercube needs --m")
        return torus.Family("hypercube", m=args.m)
    if args.r is None or args.d is None:
        raise UsageError(f"--family {args.family} needs --r and --d")
    return torus.Family(args.family, r=args.r, d=args.d)


def cmd_mixing(args, out: Output) -> int:
    fam = _family(args)
    rep = torus.mixing_time(fam, args.xi, horizon=args.horizon, eps=args.eps)
    rows = []
    for n in range(len(rep.curve)):
        b = None if rep.bound_rhs is None else float(rep.bound_rhs[n])
        rows.append([n, float(rep.curve[n]), float(rep.upper[n]), float(rep.deviation[n]), b])
    out.emit(rows, ["n", "mixing_deviation", "averaged_max", "pointwise_deviation", "bound"], rep.summary())
    if rep.status == "horizon":
        print(f"nbw mixing: not mixed within horizon {rep.horizon}", file=sys.stderr)
        return EXIT_CAP
    if rep.within_bound is False:
        print(f"nbw mixing: bound violated for {fam.label()} xi={args.xi}: "
              f"t_mix={rep.t_mix} > {rep.paper_bound}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_audit(args, out: Output) -> int:
    results = audit.run_audit(quick=args.quick, only=args.only)
    rows = [[r.name, "pass" if r.passed else "fail", round(r.seconds, 3), len(r.skipped)] for r in results]
    summary = {"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    if not args.timings:
        for c in summary["checks"]:
            c.pop("seconds")
        rows = [[r[0], r[1], r[3]] for r in rows]
        cols = ["check", "status", "skipped"]
    else:
        cols = ["check", "status", "seconds", "skipped"]
    out.emit(rows, cols, summary)
    for r in results:
        print(r.line(), file=sys.stderr)
    return EXIT_OK if summary["passed"] else EXIT_VIOLATION


def cmd_greens(args, out: Output) -> int:
    s = parse_step_set(args.step_set, args.dim)
    k = args.k if args.k is not None else np.zeros(s.dim)
    if len(k) != s.dim:
        raise UsageError(f"wave has {len(k)} components, expected {s.dim}")
    try:
        ev = greens.evaluate(s, args.z, k)
    except greens.PoleError as exc:
        print(f"nbw greens: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    coeffs = greens.series_coefficients(s, k, args.terms)
    rows = [[n, c.real, c.imag] for n, c in enumerate(coeffs)]
    out.emit(rows, ["n", "coefficient_re", "coefficient_im"], {
        "value": ev.value, "directed_values": [complex(v) for v in ev.directed_values],
        "analytic_continuation": ev.analytic_continuation, "D_hat": step_transform(s, k)})
    return EXIT_OK


def cmd_sample(args, out: Output) -> int:
    s = parse_step_set(args.step_set, args.dim)
    if args.dump_paths:
        ens = sample_paths(s, args.n, args.count, args.seed)
        Path(args.dump_paths).write_text(ens.dump_directions())
    else:
        ens = sample_endpoints(s, args.n, args.count, args.seed)
    est = empirical_covariance(ens)
    stats = ens.statistics()
    try:
        stats["target_covariance"] = CovarianceTarget.of(s).M.tolist()
    except ValueError:
        pass
    d = s.dim
    rows = [[i, j, est.matrix[i, j], est.stderr[i, j]] for i in range(d) for j in range(d)]
    out.emit(rows, ["i", "j", "covariance", "stderr"], stats)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbw", description="Exact and Monte Carlo non-backtracking walks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from the header")
    common.add_argument("--log-level", default="WARNING")
    sets = argparse.ArgumentParser(add_help=False)
    sets.add_argument("--dim", "-d", type=positive_int, required=True)
    sets.add_argument("--step-set", default="nn", help="nn, hypercube, hamming(r), a JSON file or JSON text")

    sub = p.add_subparsers(dest="subcommand", required=True)

    c = sub.add_parser("counts", parents=[common, sets], help="exact endpoint counts b_n(x)")
    c.add_argument("--n", type=nonneg_int, required=True)
    c.add_argument("--directed", action="store_true", help="per-direction counts")
    c.add_argument("--cap", type=positive_int, default=exact_count.DEFAULT_STATE_CAP)
    c.set_defaults(func=cmd_counts)

    s = sub.add_parser("spectrum", parents=[common, sets], help="dominant eigenvalues over waves")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--k", type=wave, action="append", help="wave vector, e.g. pi/2,pi/2 (repeatable)")
    g.add_argument("--grid", type=positive_int, help="use the dual grid of the torus of width r")
    s.set_defaults(func=cmd_spectrum)

    m = sub.add_parser("mixing", parents=[common], help="exact uniform mixing time against the closed-form bound")
    m.add_argument("--family", choices=torus.FAMILIES, required=True)
    m.add_argument("--r", type=positive_int)
    m.add_argument("--d", type=positive_int)
    m.add_argument("--m", type=positive_int)
    m.add_argument("--xi", type=positive_float, required=True)
    m.add_argument("--eps", type=positive_float, default=0.1)
    m.add_argument("--horizon", type=positive_int)
    m.set_defaults(func=cmd_mixing)

    a = sub.add_parser("audit", parents=[common], help="run the cross-validation checks")
    a.add_argument("--quick", action="store_true")
    a.add_argument("--only", action="append", choices=list(audit.CRITERIA))
    a.add_argument("--timings", action="store_true", help="include wall-clock seconds in the output")
    a.set_defaults(func=cmd_audit)

    gr = sub.add_parser("greens", parents=[common, sets], help="Green's function and its series")
    gr.add_argument("--z", type=complex_number, required=True)
    gr.add_argument("--k", type=wave)
    gr.add_argument("--terms", type=nonneg_int, default=10)
    gr.set_defaults(func=cmd_greens)

    sa = sub.add_parser("sample", parents=[common, sets], help="Monte Carlo ensemble statistics")
    sa.add_argument("--n", type=nonneg_int, required=True)
    sa.add_argument("--count", type=positive_int, default=1000)
    sa.add_argument("--seed", type=nonneg_int, default=0)
    sa.add_argument("--dump-paths", help="write newline-delimited direction indices here")
    sa.set_defaults(func=cmd_sample)
    return p


_OUTPUT_KEYS = {"format", "output", "no_timestamp", "log_level", "func", "subcommand"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    params = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in _OUTPUT_KEYS}
    config = RunConfig(args.subcommand, params, args.format, args.output)
    out = Output(config, timestamp=not args.no_timestamp)
    try:
        return args.func(args, out)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"nbw {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (exact_count.CapExceeded, RuntimeError) as exc:
        print(f"nbw {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
