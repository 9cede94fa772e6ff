"""Command line front end: ``betatest {test,simulate,gof,esd}``.

Every report embeds a manifest whose ``argv`` reproduces it when passed back
to ``betatest``.  Exit codes: 0 success, 1 error (including usage errors),
2 when ``test`` rejects at ``--alpha``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import sys
from contextlib import nullcontext
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import __version__
from .csvio import SCHEMA_VERSION, dump_json, read_matrix
from .errors import BetaTestError
from .esd import DEFAULT_NODES, EsdParams, density_grid, integrate_esd
from .gof import jb_statistic, ks_statistic
from .pillai import limit_l, limit_l_tilde, run_test
from .simulation import DEFAULT_SEED, ExperimentConfig, run_experiment, simulate_statistics

log = logging.getLogger("betatest")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1; 2 is reserved for "rejected"
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < (1 << 64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _kurtosis(text: str):
    """``normal``, ``estimate`` or ``fixed:D1,D2``."""
    if text in ("normal", "estimate"):
        return text
    if text.startswith("fixed:"):
        parts = text[len("fixed:"):].split(",")
        if len(parts) == 2:
            try:
                return (float(parts[0]), float(parts[1]))
            except ValueError:
                pass
    raise argparse.ArgumentTypeError(f"expected normal, estimate or fixed:D1,D2, got {text!r}")


def _delta_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(v < 0 or not math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError("delta list must be non-empty and non-negative")
    return values


def _stat_names(stat: str) -> tuple[str, ...]:
    return ("T1", "T2") if stat == "both" else (stat,)


def _add_design_flags(p: argparse.ArgumentParser, with_delta: bool) -> None:
    p.add_argument("--model", type=int, choices=(1, 2, 3, 4), default=1)
    p.add_argument("--dist", choices=("normal", "uniform"), default="normal")
    p.add_argument("--n1", type=_positive_int, default=50)
    p.add_argument("--n2", type=_positive_int, default=70)
    p.add_argument("--p", type=_positive_int, default=40)
    if with_delta:
        p.add_argument("--delta-list", type=_delta_list, default=[0.0], help="comma-separated deltas")
        p.add_argument("--alt-scale", choices=("data", "covariance"), default="data",
                       help="apply 1+delta/n1 to the observations (data) or to the covariance")
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--alpha", type=_unit_interval, default=0.05)
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    p.add_argument("--kurtosis", type=_kurtosis, default="normal", help="normal | estimate | fixed:D1,D2")
    p.add_argument("--known-mean", action="store_true", help="do not center the samples")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $BETATEST_THREADS or CPU count); not part of the result")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="betatest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test equality of two covariance matrices from CSV files")
    t.add_argument("--sample1", required=True, type=Path)
    t.add_argument("--sample2", required=True, type=Path)
    t.add_argument("--stat", choices=("T1", "T2", "both"), default="both")
    t.add_argument("--kurtosis", type=_kurtosis, default="normal", help="normal | estimate | fixed:D1,D2")
    t.add_argument("--alpha", type=_unit_interval, default=0.05)
    t.add_argument("--known-mean", action="store_true", help="do not center the samples")
    t.add_argument("--transpose", action="store_true", help="CSV rows are variables, columns observations")
    t.add_argument("--no-spectrum", action="store_true", help="omit the eigenvalue list from the report")
    t.add_argument("--out", type=Path, default=None, help="JSON report path (default: stdout)")

    s = sub.add_parser("simulate", help="Monte Carlo size/power table")
    _add_design_flags(s, with_delta=True)
    s.add_argument("--stat", choices=("T1", "T2", "both"), default="both")
    s.add_argument("--out", type=Path, default=None, help="table CSV (default: stdout)")
    s.add_argument("--long-out", type=Path, default=None,
                   help="long-format curve CSV (default: <out stem>.long.csv)")

    g = sub.add_parser("gof", help="normality of null statistics (Jarque-Bera, Kolmogorov-Smirnov)")
    _add_design_flags(g, with_delta=False)
    g.add_argument("--stat", choices=("T1", "T2", "both"), default="T1")
    g.add_argument("--out", type=Path, default=None, help="JSON report path (default: stdout)")
    g.add_argument("--sample-out", type=Path, default=None, help="CSV of the raw null statistics")

    e = sub.add_parser("esd", help="limiting spectral density grid of the Beta matrix")
    e.add_argument("--y1", type=float, required=True)
    e.add_argument("--y2", type=float, required=True)
    e.add_argument("--grid", type=int, default=200)
    e.add_argument("--nodes", type=int, default=DEFAULT_NODES, help="initial quadrature nodes")
    e.add_argument("--out", type=Path, default=None, help="grid CSV (default: stdout)")
    e.add_argument("--header-out", type=Path, default=None,
                   help="JSON header (default: <out stem>.header.json, or stderr)")
    for sp in (t, s, g, e):
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return parser


# Flags that never change results and are left out of the replay argv.
_VOLATILE = {"threads", "verbose"}


def canonical_argv(parser: argparse.ArgumentParser, args: argparse.Namespace) -> list[str]:
    """Full flag list, defaults included, that reproduces ``args``."""
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    out = [args.command]
    for action in subparser._actions:
        if not action.option_strings or action.dest in _VOLATILE or action.dest == "help":
            continue
        value = getattr(args, action.dest)
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                out.append(flag)
            continue
        if value is None:
            continue
        out += [flag, _flag_text(action.dest, value)]
    return out


def _flag_text(dest: str, value) -> str:
    if dest == "kurtosis" and isinstance(value, tuple):
        return f"fixed:{value[0]!r},{value[1]!r}"
    if dest == "delta_list":
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, Path):
        return str(value.resolve())
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _config_echo(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key in _VOLATILE:
            continue
        if isinstance(value, Path):
            value = str(value.resolve())
        elif isinstance(value, tuple):
            value = {"delta1": value[0], "delta2": value[1]}
        out[key] = value
    return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _manifest(parser, args, started: str, extra: Optional[dict] = None) -> dict:
    manifest = {
        "command": args.command,
        "argv": canonical_argv(parser, args),
        "config": _config_echo(args),
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    return manifest


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _emit_json(payload: dict, path: Optional[Path]) -> None:
    text = dump_json(payload, path)
    if path is None:
        print(text)
    else:
        log.info("wrote %s", path)


def cmd_test(parser, args) -> int:
    started = _now()
    data1 = read_matrix(args.sample1, args.transpose)
    data2 = read_matrix(args.sample2, args.transpose)
    if data1.shape[1] != data2.shape[1]:
        raise BetaTestError(
            f"column counts differ: {args.sample1} has {data1.shape[1]}, {args.sample2} has {data2.shape[1]}"
        )
    reports = run_test(data1, data2, args.stat, args.kurtosis, center=not args.known_mean)
    inputs = {
        "inputs": {
            "sample1": {"path": str(args.sample1.resolve()), "sha256": _sha256(args.sample1), "shape": list(data1.shape)},
            "sample2": {"path": str(args.sample2.resolve()), "sha256": _sha256(args.sample2), "shape": list(data2.shape)},
        }
    }
    payload = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(parser, args, started, inputs),
        "reports": [r.to_dict(include_spectrum=not args.no_spectrum) for r in reports],
    }
    _emit_json(payload, args.out)
    for r in reports:
        for w in r.warnings:
            log.warning("%s: %s", r.statistic_name, w)
        log.info("%s: standardized %.6g, p-value %.6g", r.statistic_name, r.standardized, r.p_value)
    return EXIT_REJECT if any(r.p_value < args.alpha for r in reports) else EXIT_OK


def _experiment(args, stats: tuple[str, ...], delta: float = 0.0) -> ExperimentConfig:
    return ExperimentConfig(
        model=args.model,
        dist=args.dist,
        n1=args.n1,
        n2=args.n2,
        p=args.p,
        delta=delta,
        reps=args.reps,
        alpha_level=args.alpha,
        seed=args.seed,
        statistics=stats,
        kurtosis=args.kurtosis,
        center=not args.known_mean,
        alt_scale=getattr(args, "alt_scale", "data"),
    )


def _write_csv(rows: list[dict], fields: list[str], path: Optional[Path]) -> None:
    with (open(path, "w", newline="", encoding="utf-8") if path else nullcontext(sys.stdout)) as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def cmd_simulate(parser, args) -> int:
    started = _now()
    stats = _stat_names(args.stat)
    table, long_rows, warnings = [], [], []
    for delta in args.delta_list:
        row = run_experiment(_experiment(args, stats, delta), args.threads)
        warnings += [f"delta={delta!r}: {w}" for w in row.warnings]
        for name in stats:
            rate = row.rejection_rate[name]
            table.append({
                "delta": delta,
                "stat": name,
                "rejection_rate": rate,
                "reps_used": row.reps_used,
                "wall_time": row.wall_time,
            })
            se = math.sqrt(rate * (1 - rate) / row.reps_used) if row.reps_used else float("nan")
            long_rows.append({
                "model": args.model,
                "dist": args.dist,
                "n1": args.n1,
                "n2": args.n2,
                "p": args.p,
                "delta": delta,
                "stat": name,
                "rejection_rate": rate,
                "std_error": se,
                "rejections": row.rejections[name],
                "reps_used": row.reps_used,
            })
        log.info("delta=%g: %s (%.2fs)", delta, row.rejection_rate, row.wall_time)
    for w in warnings:
        log.warning(w)
    _write_csv(table, ["delta", "stat", "rejection_rate", "reps_used", "wall_time"], args.out)
    if args.out is not None:
        long_path = args.long_out or args.out.with_suffix(".long.csv")
        _write_csv(long_rows, list(long_rows[0]), long_path)
        manifest = _manifest(parser, args, started, {"warnings": warnings})
        dump_json({"schema_version": SCHEMA_VERSION, "manifest": manifest},
                  Path(str(args.out) + ".manifest.json"))
    elif args.long_out is not None:
        _write_csv(long_rows, list(long_rows[0]), args.long_out)
    return EXIT_OK


def _normality(values: np.ndarray) -> dict:
    out = {"n": int(values.size), "mean": float(np.mean(values)), "sd": float(np.std(values, ddof=1))}
    d, ks_p = ks_statistic(values, norm.cdf)
    out["ks"] = {"statistic": d, "p_value": ks_p}
    try:
        jb, jb_p = jb_statistic(values)
        out["jb"] = {"statistic": jb, "p_value": jb_p}
    except BetaTestError as exc:
        out["jb"] = None
        out["jb_refused"] = str(exc)
    return out


def cmd_gof(parser, args) -> int:
    started = _now()
    stats = _stat_names(args.stat)
    config = _experiment(args, stats)
    values, errors = simulate_statistics(config, args.threads)
    ok = ~np.isnan(values).any(axis=1)
    results = {}
    for j, name in enumerate(stats):
        sample = values[ok, j]
        entry = _normality(sample) if sample.size else {"n": 0}
        entry["sample"] = sample.tolist()
        results[name] = entry
    payload = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(parser, args, started, {"warnings": errors}),
        "results": results,
    }
    _emit_json(payload, args.out)
    if args.sample_out is not None:
        rows = [{"replicate": int(i), **{s: float(values[i, j]) for j, s in enumerate(stats)}}
                for i in np.flatnonzero(ok)]
        _write_csv(rows, ["replicate", *stats], args.sample_out)
    return EXIT_OK


def cmd_esd(parser, args) -> int:
    started = _now()
    if args.grid < 2:
        raise UsageError("betatest esd: error: --grid must be at least 2")
    params = EsdParams(args.y1, args.y2)
    x, dens = density_grid(params, args.grid)
    c1 = args.y2 / (args.y1 + args.y2)
    c2 = 1 - c1

    def quad(x):
        return c1 * (x / c1 - 1) ** 2 + c2 * ((1 - x) / c2 - 1) ** 2

    l_closed, l_quad = limit_l(args.y1, args.y2), integrate_esd(lambda t: t, params, args.nodes)
    lt_closed, lt_quad = limit_l_tilde(args.y1, args.y2), integrate_esd(quad, params, args.nodes)
    header = {
        "schema_version": SCHEMA_VERSION,
        "manifest": _manifest(parser, args, started),
        "support": params.to_dict(),
        "l_n": {"closed_form": l_closed, "quadrature": l_quad, "abs_diff": abs(l_closed - l_quad)},
        "l_tilde_n": {"closed_form": lt_closed, "quadrature": lt_quad, "abs_diff": abs(lt_closed - lt_quad)},
    }
    _write_csv([{"x": float(a), "density": float(b)} for a, b in zip(x, dens)], ["x", "density"], args.out)
    header_path = args.header_out
    if header_path is None and args.out is not None:
        header_path = args.out.with_suffix(".header.json")
    if header_path is None:
        print(dump_json(header), file=sys.stderr)
    else:
        dump_json(header, header_path)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "gof": cmd_gof, "esd": cmd_esd}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](parser, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (BetaTestError, ValueError, OSError) as exc:
        print(f"betatest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
