"""Command-line front end.

Input data are UTF-8 comma-separated files with a header row naming the
columns ``y``, ``x1 .. xp`` and optionally ``z1 .. zq`` (any order, no
missing cells).  Results are JSON documents tagged ``"schema": "sim-spline/1"``.

Exit codes: 0 success, 1 usage or input error, 2 numerical non-convergence,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import re
import sys
import traceback
from typing import Callable, Optional, Sequence

import numpy as np

from . import serialize
from .exceptions import DataError, NumericalError, SimSplineError
from .inference import (BootstrapConfig, band_from_sample, joint_from_sample,
                        relevant_from_sample, run_bootstrap, sweep_from_sample)
from .model import Dataset, FitConfig, SingleIndexFit, fit as fit_model
from .parallel import THREADS_ENV, resolve_threads

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 1, 2, 3

CSV_HELP = ("input CSV: header row with columns y, x1..xp and optional z1..zq; "
            "UTF-8, comma separated, no missing cells")


class UsageError(Exception):
    """Bad flags or input files; maps to exit code 1."""


# ---------------------------------------------------------------------------
# input parsing
# ---------------------------------------------------------------------------

_COL = re.compile(r"^([xz])([1-9][0-9]*)$")


def read_dataset(path) -> Dataset:
    """Parse a data CSV; errors name the offending line or column."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise UsageError(f"{path}: empty file, header row required") from None
        if len(set(header)) != len(header):
            raise UsageError(f"{path}: line 1: duplicate column names")
        cols = {"x": {}, "z": {}}
        for i, name in enumerate(header):
            mt = _COL.match(name)
            if mt:
                cols[mt.group(1)][int(mt.group(2))] = i
            elif name != "y":
                raise UsageError(f"{path}: line 1: unknown column {name!r}")
        if "y" not in header:
            raise UsageError(f"{path}: line 1: missing column 'y'")
        for kind in ("x", "z"):
            idx = sorted(cols[kind])
            if idx != list(range(1, len(idx) + 1)):
                missing = next(k for k in range(1, len(idx) + 2) if k not in cols[kind])
                raise UsageError(f"{path}: line 1: missing column '{kind}{missing}'")
        if not cols["x"]:
            raise UsageError(f"{path}: line 1: missing column 'x1'")
        order = ([header.index("y")] + [cols["x"][k] for k in sorted(cols["x"])]
                 + [cols["z"][k] for k in sorted(cols["z"])])
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise UsageError(f"{path}: line {line}: expected {len(header)} fields, "
                                 f"got {len(row)}")
            try:
                vals = [float(row[j]) for j in order]
            except ValueError:
                bad = next(header[j] for j in order if not _is_float(row[j]))
                raise UsageError(f"{path}: line {line}: column {bad!r} is not a number") from None
            if not all(math.isfinite(v) for v in vals):
                raise UsageError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    arr = np.array(rows)
    p = len(cols["x"])
    try:
        return Dataset(y=arr[:, 0], x=arr[:, 1:1 + p], z=arr[:, 1 + p:])
    except DataError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _floats(text: str, flag: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def parse_gstar(text: str, interval: Optional[tuple] = None) -> Callable:
    """``zero``, ``poly:c0,c1,...`` (coefficients of 1, s, s^2, ...) or ``csv:path``.

    A table (columns ``s``, ``g``) is interpolated linearly and must cover
    ``interval``.
    """
    if text == "zero":
        return np.zeros_like
    if text.startswith("poly:"):
        c = _floats(text[5:], "--gstar")
        if c.size == 0:
            raise UsageError("--gstar poly: needs at least one coefficient")
        return lambda s: np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), c)
    if text.startswith("csv:"):
        path = text[4:]
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
        if not rows or [h.strip() for h in rows[0]] != ["s", "g"]:
            raise UsageError(f"{path}: line 1: header must be 's,g'")
        try:
            tab = np.array([[float(a), float(b)] for a, b in rows[1:] if a.strip()])
        except ValueError:
            raise UsageError(f"{path}: non-numeric entry in g* table") from None
        if tab.shape[0] < 2 or np.any(np.diff(tab[:, 0]) <= 0):
            raise UsageError(f"{path}: need at least two rows with increasing s")
        if interval is not None and (tab[0, 0] > interval[0] or tab[-1, 0] < interval[1]):
            raise UsageError(f"{path}: g* table covers [{tab[0, 0]}, {tab[-1, 0]}], "
                             f"not the band interval [{interval[0]}, {interval[1]}]")
        s_tab, g_tab = tab[:, 0].copy(), tab[:, 1].copy()
        return lambda s: np.interp(s, s_tab, g_tab)
    raise UsageError(f"--gstar: expected zero, poly:... or csv:..., got {text!r}")


def parse_sweep(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("--sweep: expected lo:hi:steps")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError("--sweep: expected lo:hi:steps") from None
    if steps < 2:
        raise UsageError("--sweep: steps must be >= 2")
    if not lo < hi:
        raise UsageError(f"--sweep: bounds inverted ({lo} >= {hi})")
    if lo < 0:
        raise UsageError("--sweep: Delta must be nonnegative")
    return np.linspace(lo, hi, steps)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _summary(f: SingleIndexFit) -> str:
    beta = ", ".join(f"{b:.6g}" for b in f.beta)
    status = "converged" if f.converged else "NOT converged"
    return (f"{status} after {f.n_iter} iterations; lambda = {f.lam:.6g}; "
            f"GCV = {f.gcv:.6g}; beta = [{beta}]\n")


def _load_pair(args) -> tuple[SingleIndexFit, Dataset]:
    try:
        f = serialize.load_fit(args.fit)
    except OSError as exc:
        raise UsageError(f"cannot open {args.fit}: {exc.strerror}") from exc
    except DataError as exc:
        raise UsageError(str(exc)) from exc
    data = read_dataset(args.data)
    if (data.n, data.p, data.q) != (f.n, f.beta.size, f.gamma.size):
        raise UsageError(f"fit/data mismatch: fit has (n, p, q) = "
                         f"({f.n}, {f.beta.size}, {f.gamma.size}), data has "
                         f"({data.n}, {data.p}, {data.q})")
    return f, data


def _boot_config(args, **kw) -> BootstrapConfig:
    try:
        return BootstrapConfig(B=args.B, alpha=args.alpha, seed=args.seed,
                               grid_size=args.grid_size, reuse_lambda=args.reuse_lambda,
                               threads=resolve_threads(args.threads), **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    kw = {"m": args.m, "max_outer_iter": args.max_iter, "tol": args.tol, "seed": args.seed}
    if args.v is not None:
        kw["v"] = args.v
    if args.lam is not None:
        kw["lam"] = args.lam
    try:
        config = FitConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    f = fit_model(data, config)
    _write(args.out, serialize.dumps(serialize.fit_to_dict(f)))
    # keep stdout clean when the JSON goes there
    (sys.stderr if args.out in (None, "-") else sys.stdout).write(_summary(f))
    return EXIT_OK if f.converged else EXIT_NONCONVERGED


def cmd_band(args) -> int:
    f, data = _load_pair(args)
    config = _boot_config(args)
    sample = run_bootstrap(data, f, config)
    band = band_from_sample(f, sample, args.alpha)
    doc = band.to_dict()
    doc["dropped"] = sample.dropped
    _write(args.out, serialize.dumps(doc))
    if args.csv:
        _write(args.csv, serialize.band_csv(band))
    return EXIT_OK


def cmd_test_relevant(args) -> int:
    if (args.delta is None) == (args.sweep is None):
        raise UsageError("give exactly one of --delta and --sweep")
    if args.delta is not None and args.delta < 0:
        raise UsageError("--delta must be nonnegative")
    deltas = parse_sweep(args.sweep) if args.sweep else None
    f, data = _load_pair(args)
    config = _boot_config(args)
    g_star = parse_gstar(args.gstar, tuple(f.index_range))
    sample = run_bootstrap(data, f, config)
    if deltas is None:
        res = relevant_from_sample(f, sample, g_star, args.delta, args.alpha)
    else:
        res = sweep_from_sample(f, sample, g_star, deltas, args.alpha)
    doc = res.to_dict()
    doc["gstar"] = args.gstar
    doc["dropped"] = sample.dropped
    _write(args.out, serialize.dumps(doc))
    return EXIT_OK


def cmd_test_joint(args) -> int:
    f, data = _load_pair(args)
    x0 = _floats(args.x0, "--x0")
    z0 = _floats(args.z0, "--z0") if args.z0 else np.zeros(0)
    if x0.size != f.beta.size or z0.size != f.gamma.size:
        raise UsageError(f"--x0/--z0 have lengths ({x0.size}, {z0.size}); the fit needs "
                         f"({f.beta.size}, {f.gamma.size})")
    config = _boot_config(args, literal_tnb=args.literal_tnb)
    sample = run_bootstrap(data, f, config, x0=x0, z0=z0)
    res = joint_from_sample(f, sample, x0, z0, args.y0, args.alpha, args.literal_tnb)
    doc = res.to_dict()
    doc.update({"x0": x0.tolist(), "z0": z0.tolist(), "y0": float(args.y0),
                "dropped": sample.dropped})
    _write(args.out, serialize.dumps(doc))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from . import simulation as sim

    threads = resolve_threads(args.threads)
    n_list = args.n or ([1000] if args.experiment == "power" else [200])
    common = {"seed": args.seed, "threads": threads}
    if args.reps is not None:
        common["mc_reps"] = args.reps
    try:
        if args.experiment == "coverage":
            rep = sim.run_coverage(settings=args.setting, n_list=n_list,
                                   alpha_list=args.alpha or (0.10, 0.05), B=args.B, **common)
        elif args.experiment == "power":
            if args.alpha and len(args.alpha) > 1:
                raise UsageError("power takes a single --alpha")
            rep = sim.run_power_curve(setting=args.setting[0], n_list=n_list, B=args.B,
                                      alpha=(args.alpha or [0.05])[0], **common)
        elif args.experiment == "joint":
            rep = sim.run_joint(setting=args.setting[0], n_list=n_list,
                                alpha_list=args.alpha or (0.10, 0.05), B=args.B,
                                boot_config=BootstrapConfig(literal_tnb=args.literal_tnb),
                                **common)
        else:
            rep = sim.run_risk(setting=args.setting[0], n_list=n_list, **common)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for path in rep.write(args.out):
        sys.stderr.write(f"wrote {path}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default ${THREADS_ENV}, else all cores); "
                        "results do not depend on it")


def _boot_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("fit", help="fit JSON written by 'sim-spline fit'")
    p.add_argument("data", help="the CSV the fit was computed from")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--B", type=int, default=200, help="bootstrap replicates (>= 100)")
    p.add_argument("--grid-size", type=int, default=401)
    p.add_argument("--reuse-lambda", action="store_true",
                   help="keep the main fit's lambda in every replicate instead of GCV")
    p.add_argument("-o", "--out", default=None, help="output JSON (default stdout)")
    _common(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sim-spline",
        description="Smoothing-spline estimation and multiplier-bootstrap inference for "
                    "the partially linear single-index model.",
        epilog=CSV_HELP + ". Exit codes: 0 ok, 1 usage/input, 2 non-convergence, 3 internal.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit", help="fit the model to a CSV", description=CSV_HELP)
    p.add_argument("data", help="input CSV")
    p.add_argument("-o", "--out", default=None, help="output JSON (default stdout)")
    p.add_argument("--m", type=int, default=3, help="penalty order (default 3)")
    p.add_argument("--v", type=int, default=None, help="eigenfunctions kept (default: CV)")
    p.add_argument("--lam", type=float, default=None, help="fixed lambda (default: GCV)")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("band", help="simultaneous confidence band for the link")
    _boot_flags(p)
    p.add_argument("--csv", default=None, help="also write the band as CSV (s,center,lower,upper)")
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("test-relevant", help="test sup|g - g*| <= Delta")
    _boot_flags(p)
    p.add_argument("--gstar", default="zero",
                   help="reference link: zero, poly:c0,c1,... or csv:path (columns s,g)")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sweep", default=None, metavar="LO:HI:STEPS",
                   help="decisions over an equispaced Delta grid")
    p.set_defaults(func=cmd_test_relevant)

    p = sub.add_parser("test-joint", help="test g(x0'beta) + z0'gamma = y0")
    _boot_flags(p)
    p.add_argument("--x0", required=True, help="comma-separated covariate vector")
    p.add_argument("--z0", default="", help="comma-separated linear covariates")
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--literal-tnb", action="store_true",
                   help="use the uncentered bootstrap statistic")
    p.set_defaults(func=cmd_test_joint)

    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    p.add_argument("--experiment", required=True,
                   choices=("coverage", "power", "joint", "risk"))
    p.add_argument("--setting", type=int, nargs="+", default=[1], choices=(1, 2, 3))
    p.add_argument("--n", type=int, nargs="+", default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--alpha", type=float, nargs="+", default=None)
    p.add_argument("--literal-tnb", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    _common(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"sim-spline: error: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"sim-spline: numerical failure: {exc}\n")
        return EXIT_NONCONVERGED
    except (DataError, SimSplineError) as exc:
        sys.stderr.write(f"sim-spline: error: {exc}\n")
        return EXIT_USAGE
    except Exception:  # noqa: BLE001 - last-resort mapping to the internal exit code
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
