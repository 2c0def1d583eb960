"""Command-line interface: ``sgcm test``, ``sgcm simulate``, ``sgcm diagnose``.

Input formats
-------------
euclidean, sphere
    CSV with one observation per row (an optional non-numeric header row is
    skipped).
w1, w2, fisher_rao, hellinger
    CSV with one point cloud per row; rows may have different lengths.
curves
    A directory of per-observation CSV files read in sorted name order.
    Each file has a header whose first column is ``t``; every file must use
    the same time grid.

Settings may also come from an INI file (``--config``) with a ``[sgcm]``
section whose keys are the long flag names with dashes or underscores;
command-line flags win.  Exit codes: 0 success, 1 internal error, 2 input or
configuration error, 3 degenerate data.
"""

import argparse
import configparser
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateDataError, InputError, NumericalError, SGCMError, StudyError
from .kernels import KernelSpec, exponential_kernel_matrix, median_heuristic, min_eigenvalue
from .kernels import rational_quadratic_kernel_matrix
from .pipeline import TestConfig, run_test
from .simulate import DESK_SCALE, FULL_SCALE, DgpSpec, monte_carlo_study
from .spaces import check_negative_type, check_unit_rows, curve_metric, get_metric
from .spectral import fve_curve, truncated_eigensystem

SPACES = ("euclidean", "sphere", "w1", "w2", "fisher_rao", "hellinger", "curves")
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3


class DataFileError(InputError):
    pass


# ----------------------------------------------------------------------------
# Reading data
# ----------------------------------------------------------------------------

def _parse_rows(path, ragged=False):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: no such file")
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                rows.append([float(f) for f in rec if f.strip()])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise DataFileError(f"{path}, line {lineno}: non-numeric value") from None
            if not all(math.isfinite(v) for v in rows[-1]):
                raise DataFileError(f"{path}, line {lineno}: non-finite value")
            if not ragged and len(rows[-1]) != len(rows[0]):
                raise DataFileError(
                    f"{path}, line {lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}"
                )
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    return rows


def read_matrix(path):
    return np.array(_parse_rows(path), dtype=float)


def read_clouds(path):
    rows = _parse_rows(path, ragged=True)
    if len({len(r) for r in rows}) == 1:
        return np.array(rows, dtype=float)
    return [np.array(r, dtype=float) for r in rows]


def read_curves(directory):
    """Curves from a directory of CSVs; returns (times, (n, T, d) values)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFileError(f"{directory}: not a directory of curve files")
    files = sorted(p for p in directory.iterdir() if p.suffix == ".csv")
    if not files:
        raise DataFileError(f"{directory}: no .csv curve files")
    times, values = None, []
    for f in files:
        with open(f, newline="") as fh:
            header = next(csv.reader(fh), None)
        if not header or header[0].strip() != "t":
            raise DataFileError(f"{f}, line 1: header must start with a 't' column")
        arr = read_matrix(f)
        if arr.shape[1] < 2:
            raise DataFileError(f"{f}: needs a 't' column and at least one value column")
        if times is None:
            times = arr[:, 0]
        elif arr.shape[0] != times.size or not np.array_equal(arr[:, 0], times):
            raise DataFileError(f"{f}: time grid differs from {files[0].name}")
        if values and arr.shape[1] - 1 != values[0].shape[1]:
            raise DataFileError(f"{f}: value dimension differs from {files[0].name}")
        values.append(arr[:, 1:])
    return times, np.stack(values)


def load_variable(path, space, curve_p=1, curve_base="sphere"):
    """Read one variable and return (data, metric)."""
    if space not in SPACES:
        raise InputError(f"unknown space {space!r}; choose from {SPACES}")
    if space == "curves":
        times, values = read_curves(path)
        return values, curve_metric(times, p=curve_p, base=curve_base)
    if space == "sphere":
        return check_unit_rows(read_matrix(path), str(path)), space
    if space == "euclidean":
        return read_matrix(path), space
    return read_clouds(path), space


# ----------------------------------------------------------------------------
# Argument handling
# ----------------------------------------------------------------------------

def _kernel_args(p, prefixes):
    for v in prefixes:
        p.add_argument(f"--{v}-kernel", choices=("exponential", "rational_quadratic"),
                       default="exponential", help=f"kernel family for {v.upper()}")
        p.add_argument(f"--{v}-gamma", type=float, default=None,
                       help="fixed scale (gamma, or c for rational_quadratic); default median heuristic")
        p.add_argument(f"--{v}-q", type=float, default=1.0, help="power applied to the distances")
        p.add_argument(f"--{v}-alpha", type=float, default=1.0, help="rational_quadratic exponent")


def _test_args(p):
    p.add_argument("--frac2", type=float, default=0.2, help="fraction of the sample used for the basis")
    p.add_argument("--tau", type=float, default=0.8, help="FVE threshold for X and Y")
    p.add_argument("--tau-x", type=float, default=None)
    p.add_argument("--tau-y", type=float, default=None)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--B", type=int, default=None, help="bootstrap replicates")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--multiplier", choices=("gaussian", "rademacher", "mammen"), default="gaussian")
    p.add_argument("--learner", choices=("auto", "gbt", "krr"), default="auto")


def _common(p):
    p.add_argument("--config", default=None, help="INI file with a [sgcm] section")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default: standard output)")
    p.add_argument("--curve-p", type=int, default=1, help="order of the curve distance")
    p.add_argument("--curve-base", choices=("sphere", "euclidean"), default="sphere")


def build_parser():
    parser = argparse.ArgumentParser(prog="sgcm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"sgcm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test X independent of Y given Z on data files")
    for v in ("x", "y", "z"):
        t.add_argument(f"--{v}", required=True, help=f"data for {v.upper()}")
        t.add_argument(f"--{v}-space", choices=SPACES, default="euclidean")
    _kernel_args(t, ("x", "y", "z"))
    _test_args(t)
    _common(t)

    s = sub.add_parser("simulate", help="Monte Carlo size/power study")
    s.add_argument("--family", choices=("low_dim", "high_dim", "distributional"), default="low_dim")
    s.add_argument("--scenario", default="null")
    s.add_argument("--a", type=int, default=2)
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--b", type=float, default=None)
    s.add_argument("--dist-kind", choices=("mean_varying", "variance_varying"), default="mean_varying")
    s.add_argument("--dist-metric", choices=("w1", "w2", "fisher_rao", "hellinger"), default="w1",
                   help="semimetric on the simulated clouds")
    s.add_argument("--c", type=float, default=0.0)
    s.add_argument("--m", type=int, default=150)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--reps", type=int, default=None, help="replications")
    s.add_argument("--full-scale", action="store_true",
                   help=f"B={FULL_SCALE['B']} and {FULL_SCALE['replications']} replications unless given")
    s.add_argument("--timing", action="store_true",
                   help="record wall time (the output then varies between runs)")
    _test_args(s)
    _common(s)

    d = sub.add_parser("diagnose", help="semimetric and kernel diagnostics for one variable")
    d.add_argument("--input", required=True)
    d.add_argument("--space", choices=SPACES, default="euclidean")
    d.add_argument("--kernel", choices=("exponential", "rational_quadratic"), default="exponential")
    d.add_argument("--gamma", type=float, default=None)
    d.add_argument("--q", type=float, default=1.0)
    d.add_argument("--alpha", type=float, default=1.0)
    d.add_argument("--tau", type=float, default=0.8)
    d.add_argument("--trials", type=int, default=1000, help="random weight vectors for the negative-type check")
    _common(d)
    return parser


def _apply_config_file(parser, sub, argv):
    """Parse `argv` with INI values as defaults, so that flags take precedence."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in sub.choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    path = Path(known.config)
    if not path.is_file():
        raise DataFileError(f"{path}: no such config file")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive (B and b differ)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise DataFileError(f"{path}: {exc}") from None
    if not cp.has_section("sgcm"):
        raise DataFileError(f"{path}: missing [sgcm] section")
    subparser = sub.choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in cp.items("sgcm"):
        dest = key.replace("-", "_")
        if dest in ("help", "config") or dest not in actions:
            raise DataFileError(f"{path}: unknown key {key!r} for command {command!r}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            try:
                defaults[dest] = cp.getboolean("sgcm", key)
            except ValueError:
                raise DataFileError(f"{path}: {key} must be a boolean") from None
            continue
        try:
            value = act.type(raw) if act.type else raw
        except ValueError:
            raise DataFileError(f"{path}: bad value {raw!r} for {key}") from None
        if act.choices and value not in act.choices:
            raise DataFileError(f"{path}: {key} must be one of {list(act.choices)}")
        defaults[dest] = value
        act.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# ----------------------------------------------------------------------------
# Output
# ----------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(float(obj))
    if obj is None or isinstance(obj, (int, str)):
        return obj
    return repr(obj)


def _header(args):
    """The resolved settings; output paths and worker counts are left out so
    that repeated runs produce identical files."""
    skip = {"out", "config"}
    settings = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {"program": f"sgcm {__version__}", "settings": settings}


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _write_json(header, body, out):
    # JSON has no comment syntax, so the header is the first key
    record = {"header": header}
    record.update(body)
    _write(json.dumps(_jsonable(record), indent=2) + "\n", out)


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def _kernel_spec(args, v):
    family = getattr(args, f"{v}_kernel")
    scale = getattr(args, f"{v}_gamma")
    q = getattr(args, f"{v}_q")
    if family == "exponential":
        return KernelSpec(family, gamma=scale, q=q)
    return KernelSpec(family, c=1.0 if scale is None else scale,
                      alpha=getattr(args, f"{v}_alpha"), q=q)


def _test_config(args, **extra):
    return TestConfig(
        frac2=args.frac2, tau=args.tau, tau_x=args.tau_x, tau_y=args.tau_y, folds=args.folds,
        B=args.B, alpha=args.alpha, multiplier=args.multiplier, learner=args.learner, **extra,
    )


def cmd_test(args):
    if args.B is None:
        args.B = 2000
    data, metrics = {}, {}
    for v in ("x", "y", "z"):
        data[v], metrics[v] = load_variable(getattr(args, v), getattr(args, f"{v}_space"),
                                            args.curve_p, args.curve_base)
    config = _test_config(
        args,
        x_metric=metrics["x"], y_metric=metrics["y"], z_metric=metrics["z"],
        x_kernel=_kernel_spec(args, "x"), y_kernel=_kernel_spec(args, "y"), z_kernel=_kernel_spec(args, "z"),
    )
    res = run_test(data["x"], data["y"], data["z"], config, seed=args.seed)
    header = _header(args)
    header["resolved"] = config.describe()
    _write_json(header, res.to_dict(), args.out)
    return EXIT_OK


def cmd_simulate(args):
    scale = FULL_SCALE if args.full_scale else DESK_SCALE
    if args.B is None:
        args.B = scale["B"]
    if args.reps is None:
        args.reps = scale["replications"]
    spec = DgpSpec(args.family, n=args.n, scenario=args.scenario, a=args.a, d=args.d, b=args.b,
                   dist_kind=args.dist_kind, c=args.c, m=args.m)
    extra = {}
    if args.family == "distributional":
        extra = {"x_metric": args.dist_metric, "y_metric": args.dist_metric}
    config = _test_config(args, **extra)
    report = monte_carlo_study(spec, config, args.reps, seed=args.seed)
    header = json.dumps(_jsonable(_header(args)), sort_keys=True)
    text = report.to_csv(timing=args.timing, comment=header)
    _write(text, args.out)
    row = report.rows[0]
    if args.out is not None:
        print(f"rejection_rate={row.rejection_rate:.4f} se={row.se:.4f} "
              f"replications={row.replications}")
    return EXIT_OK


def cmd_diagnose(args):
    data, metric = load_variable(args.input, args.space, args.curve_p, args.curve_base)
    metric = get_metric(metric)
    prep = metric.prepared(data)
    n = len(prep)
    if n < 2:
        raise InputError("diagnostics need at least two observations")
    D = metric(prep)
    upper = D[np.triu_indices(n, 1)]
    if args.kernel == "exponential":
        gamma = args.gamma if args.gamma is not None else median_heuristic(D)
        G = exponential_kernel_matrix(D, gamma, args.q)
    else:
        gamma = args.gamma if args.gamma is not None else 1.0
        G = rational_quadratic_kernel_matrix(D, gamma, args.alpha, args.q)
    Dq = D if args.q == 1 else D ** args.q
    worst = check_negative_type(Dq, args.trials, np.random.default_rng(args.seed))
    es, choice, gap = truncated_eigensystem(G, args.tau)
    lam_min = min_eigenvalue(G)
    body = {
        "semimetric": {
            "name": metric.name,
            "n": n,
            "min": float(upper.min()),
            "median": float(np.median(upper)),
            "max": float(upper.max()),
            "zero_pairs": int(np.sum(upper == 0)),
        },
        "negative_type": {"trials": args.trials, "max_quadratic_form": worst, "passes": worst <= 1e-8},
        "kernel": {"family": args.kernel, "gamma": gamma, "q": args.q},
        "gram_min_eigenvalue": lam_min,
        "gram_psd": lam_min >= -1e-8 * n,
        "eigenvalues": es.all_eigenvalues,
        "fve_curve": fve_curve(es.all_eigenvalues),
        "truncation": {"tau": args.tau, "P": choice.P, "fve": choice.fve_achieved,
                       "spectral_gap_warning": gap},
    }
    _write_json(_header(args), body, args.out)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "diagnose": cmd_diagnose}


def _exit_code(exc):
    if isinstance(exc, StudyError):
        return _exit_code(exc.cause)
    if isinstance(exc, (InputError, OSError)):
        return EXIT_INPUT
    if isinstance(exc, (DegenerateDataError, NumericalError)):
        return EXIT_DEGENERATE
    if isinstance(exc, SGCMError):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv=None):
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    try:
        args = _apply_config_file(parser, sub, argv)
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        label = {EXIT_INPUT: "error", EXIT_DEGENERATE: "degenerate data"}.get(code, "internal error")
        print(f"sgcm: {label}: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL and os.environ.get("SGCM_DEBUG"):
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
