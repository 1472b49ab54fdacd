"""Command line interface.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .core import NumericalError, model_from_letter
from .ksel import SelectionConfig, stability_select
from .natest import run_test
from .simgen import INNOVATIONS, ScenarioConfig, SignalSpec, power_curve, write_csv
from .twosample import run_two_sample_test

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# input parsing


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path):
    """Read a numeric CSV (rows = samples); returns ``(values, column_names)``.

    A first row containing any non-numeric field is taken as the header.
    Column names default to ``V1 .. Vp`` when there is no header.
    """
    try:
        fh = sys.stdin if path == "-" else open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    if not rows:
        raise InputError(f"{path}: no data")
    header = None
    start = 0
    if not all(_is_number(f) for f in rows[0]):
        header = [f.strip() for f in rows[0]]
        start = 1
    width = len(header) if header else len(rows[start]) if start < len(rows) else 0
    data = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise InputError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
        vals = []
        for col, f in enumerate(row, start=1):
            try:
                v = float(f)
            except ValueError:
                raise InputError(f"{path}: line {lineno}, column {col}: cannot parse {f!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: line {lineno}, column {col}: non-finite value {f!r}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise InputError(f"{path}: header but no data rows")
    names = header or [f"V{j + 1}" for j in range(width)]
    if len(set(names)) != len(names):
        raise InputError(f"{path}: duplicate column names in header")
    return np.array(data), names


def read_groups(path):
    """Parse ``name<TAB>col<TAB>col...`` lines into an ordered dict."""
    groups = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = [f.strip() for f in line.split("\t")]
            name, cols = parts[0], [c for c in parts[1:] if c]
            if not name:
                raise InputError(f"{path}: line {lineno}: missing group name")
            if name in groups:
                raise InputError(f"{path}: line {lineno}: duplicate group name {name!r}")
            groups[name] = cols
    if not groups:
        raise InputError(f"{path}: no groups")
    return groups


def paired_difference(X, layout):
    n = X.shape[0]
    if n % 2:
        raise InputError(f"paired data needs an even number of rows, got {n}")
    if layout == "interleaved":
        return X[1::2] - X[0::2]
    if layout == "blocks":
        return X[n // 2 :] - X[: n // 2]
    raise InputError(f"unknown paired layout {layout!r}")


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def report_json(report):
    # json uses repr(float), which round-trips every double exactly
    return json.dumps(_jsonable(report.to_dict()), indent=2)


REPORT_FIELDS = ["statistic", "centering", "sigma_hat", "z_score", "p_value", "k", "alpha", "reject", "n", "p"]


def report_csv(report):
    buf = io.StringIO()
    d = report.to_dict()
    extra_keys = [k for k, v in d["extras"].items() if not isinstance(v, (dict, list))]
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(REPORT_FIELDS + extra_keys)
    w.writerow([_fmt(d[k]) for k in REPORT_FIELDS] + [_fmt(d["extras"][k]) for k in extra_keys])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _emit(text, out_path):
    if out_path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# commands


def _parse_k(value):
    if value == "auto":
        return "auto"
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k must be 'auto' or a non-negative integer, got {value!r}")
    if k < 0:
        raise argparse.ArgumentTypeError("--k must be non-negative")
    return k


def _selection_config(args):
    grid = None
    if getattr(args, "kmax", None) is not None:
        grid = tuple(range(args.kmax + 1))
    return SelectionConfig(k_grid=grid, H=args.H, seed=args.seed)


def one_sample(X, k, alpha, cfg, force_k=False):
    selection = None
    if k == "auto":
        selection = stability_select(X, cfg)
        k = selection.chosen_k
        force_k = True
    report = run_test(X, k, alpha, force_k=force_k)
    if selection is not None:
        report.extras["selection"] = selection.to_dict()
    return report


def cmd_test(args):
    X, _ = read_matrix(args.input)
    report = one_sample(X, args.k, args.alpha, _selection_config(args), args.force_k)
    _emit(report_json(report) if args.format == "json" else report_csv(report), args.output)
    return EXIT_OK


def cmd_test2(args):
    X1, _ = read_matrix(args.x)
    X2, _ = read_matrix(args.y)
    if X1.shape[1] != X2.shape[1]:
        raise InputError(f"--x has {X1.shape[1]} columns but --y has {X2.shape[1]}")
    cfg = _selection_config(args)
    report = run_two_sample_test(X1, X2, args.k, args.alpha, cfg, force_k=args.force_k)
    _emit(report_json(report) if args.format == "json" else report_csv(report), args.output)
    return EXIT_OK


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _ints(s):
    return [int(v) for v in str(s).split(",") if v.strip()]


def cmd_simulate(args):
    ks = [_parse_k(v.strip()) for v in args.k.split(",")]
    configs = []
    for p in _ints(args.p):
        for beta in _floats(args.beta):
            for r in _floats(args.r):
                for k in ks:
                    configs.append(
                        ScenarioConfig(
                            n=args.n,
                            p=p,
                            model=model_from_letter(args.model, args.model_seed),
                            signal=SignalSpec(beta, r, args.placement, args.seed, args.per_replicate_signal),
                            reps=args.reps,
                            alpha=args.alpha,
                            k=k,
                            selection=SelectionConfig(
                                k_grid=None if args.kmax is None else tuple(range(args.kmax + 1)),
                                H=args.H,
                                seed=args.seed,
                            ),
                            innovation=args.innovation,
                            seed=args.seed,
                            include_diagonal=args.diagonal,
                            include_oracle=not args.no_oracle,
                            force_k=args.force_k,
                        )
                    )
    for cfg in configs:
        cfg.validate()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        rows = power_curve(configs, workers=args.workers)
    buf = io.StringIO()
    write_csv(rows, buf)
    _emit(buf.getvalue(), args.out)
    failed = sum(r["failures"] for r in rows)
    if failed:
        print(f"warning: {failed} replicate failures", file=sys.stderr)
    return EXIT_OK


@dataclass
class GroupOutcome:
    group: str
    n_columns: int
    status: str
    reason: str = ""
    report: object = None


BATCH_FIELDS = [
    "group", "n_columns", "status", "reason", "chosen_k", "statistic", "sigma_hat",
    "z_score", "p_value", "threshold", "significant",
]


def _test_group(name, X, cols, args):
    try:
        cfg = _selection_config(args)
        rep = one_sample(X[:, cols], "auto", args.alpha, cfg)
        return GroupOutcome(name, len(cols), "tested", report=rep)
    except (NumericalError, np.linalg.LinAlgError, ValueError) as exc:
        return GroupOutcome(name, len(cols), "failed", reason=str(exc))


def cmd_groups(args):
    X, names = read_matrix(args.input)
    if args.paired_diff != "none":
        X = paired_difference(X, args.paired_diff)
    groups = read_groups(args.groups)
    index = {c: j for j, c in enumerate(names)}

    outcomes, todo = [], []
    for name, cols in groups.items():
        present = [index[c] for c in cols if c in index]
        if not present:
            raise InputError(f"group {name!r}: none of its columns are in the input matrix")
        if len(present) < args.min_size:
            outcomes.append(
                GroupOutcome(name, len(present), "excluded", f"only {len(present)} columns (< {args.min_size})")
            )
        else:
            todo.append((name, present))

    threads = max(1, int(os.environ.get("NA_T2_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=threads) as ex:
        outcomes.extend(ex.map(lambda t: _test_group(t[0], X, t[1], args), todo))

    tested = [o for o in outcomes if o.status == "tested"]
    threshold = args.alpha / len(tested) if tested else float("nan")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(BATCH_FIELDS)
    for o in sorted(outcomes, key=lambda o: o.group):
        r = o.report
        if r is None:
            w.writerow([o.group, o.n_columns, o.status, o.reason, "", "", "", "", "", "", ""])
            continue
        w.writerow(
            [
                o.group, o.n_columns, o.status, o.reason, r.k, repr(r.statistic), repr(r.sigma_hat),
                repr(r.z_score), repr(r.p_value), repr(threshold), r.p_value <= threshold,
            ]
        )
    _emit(buf.getvalue(), args.out)
    if any(o.status == "failed" for o in outcomes):
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(p, seed=True):
    p.add_argument("--k", type=_parse_k, default="auto", help="band width or 'auto' (default)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--H", type=int, default=5, help="number of parts for stability selection")
    p.add_argument("--kmax", type=int, default=None, help="largest k tried by auto selection (default n/10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force-k", action="store_true", help="allow k above n/10")
    p.add_argument("--out", dest="format", choices=["json", "csv"], default="json", help="output format")
    p.add_argument("-o", "--output", default="-", help="output file (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nat2", description="Neighborhood-assisted Hotelling T^2 tests")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="one-sample test of H0: mean = 0")
    p.add_argument("input", help="CSV file, rows = samples ('-' for stdin)")
    _common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("test2", help="two-sample test of equal means")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    _common(p)
    p.set_defaults(func=cmd_test2)

    p = sub.add_parser("simulate", help="Monte Carlo size/power; comma lists sweep a grid")
    p.add_argument("--model", choices=list("abcd"), default="a")
    p.add_argument("--model-seed", type=int, default=0, help="seed for the random sparse model (c)")
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--p", default="200")
    p.add_argument("--beta", default="0.5")
    p.add_argument("--r", default="0")
    p.add_argument("--placement", choices=["random", "clustered"], default="random")
    p.add_argument("--per-replicate-signal", action="store_true", help="redraw random signal positions per replicate")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--k", default="3", help="band width, 'auto', or a comma list")
    p.add_argument("--H", type=int, default=5)
    p.add_argument("--kmax", type=int, default=None, help="largest k tried by auto selection (default n/10)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--innovation", choices=list(INNOVATIONS), default="gaussian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diagonal", action="store_true", help="also run the k=0 test")
    p.add_argument("--no-oracle", action="store_true")
    p.add_argument("--force-k", action="store_true")
    p.add_argument("--workers", type=int, default=None, help="processes (default NA_T2_THREADS or 1)")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("groups", help="per-group tests with Bonferroni correction")
    p.add_argument("--input", required=True, help="CSV with a header naming the columns")
    p.add_argument("--groups", required=True, help="lines of name<TAB>column<TAB>column...")
    p.add_argument("--paired-diff", choices=["none", "interleaved", "blocks"], default="none")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--correction", choices=["bonferroni"], default="bonferroni")
    p.add_argument("--min-size", type=int, default=60)
    p.add_argument("--H", type=int, default=5)
    p.add_argument("--kmax", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_groups)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
