"""JSON persistence for fits and CSV export of bands.

Floats are written with ``repr`` (shortest round-trip form, at most 17
significant digits), so a saved fit reloads bit for bit.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .eigensystem import EigenSystem, Interval, _reference_space
from .exceptions import DataError
from .inference import BandResult
from .model import FitConfig, SingleIndexFit

SCHEMA = "sim-spline/1"


def _readonly(a, order="C") -> np.ndarray:
    a = np.array(a, dtype=float, order=order)
    a.setflags(write=False)
    return a


def config_to_dict(config: FitConfig) -> dict:
    d = {}
    for k, v in config.__dict__.items():
        if isinstance(v, tuple):
            v = [float(x) if isinstance(x, (float, np.floating)) else int(x) for x in v]
        elif isinstance(v, np.generic):
            v = v.item()
        d[k] = v
    return d


def config_from_dict(d: dict) -> FitConfig:
    kw = dict(d)
    for k in ("gcv_grid", "v_grid"):
        if k in kw:
            kw[k] = tuple(kw[k])
    return FitConfig(**kw)


def fit_to_dict(fit: SingleIndexFit) -> dict:
    eig = fit.eig
    return {
        "schema": SCHEMA,
        "kind": "fit",
        "converged": bool(fit.converged),
        "n_iter": int(fit.n_iter),
        "n": int(fit.n),
        "lam": float(fit.lam),
        "gcv": float(fit.gcv),
        "beta": fit.beta.tolist(),
        "gamma": fit.gamma.tolist(),
        "a": fit.a.tolist(),
        "a_tilde": fit.a_tilde.tolist(),
        "index_range": [float(fit.index_range[0]), float(fit.index_range[1])],
        "objective_trace": np.asarray(fit.objective_trace).tolist(),
        "config": config_to_dict(fit.config),
        "eigensystem": {
            "interval": [eig.interval.lo, eig.interval.hi],
            "m": int(eig.m),
            "degree": int(eig.degree),
            "num_basis": int(eig.num_basis),
            "coef": eig.coef.tolist(),
            "rho": eig.rho.tolist(),
            "grid": eig.grid.tolist(),
            "quad_weights": eig.quad_weights.tolist(),
            "weight": eig.weight.tolist(),
            "phi": eig.phi.tolist(),
        },
    }


def fit_from_dict(d: dict) -> SingleIndexFit:
    if d.get("schema") != SCHEMA or d.get("kind") != "fit":
        raise DataError(f"not a {SCHEMA} fit document")
    try:
        e = d["eigensystem"]
        m, degree, num_basis = int(e["m"]), int(e["degree"]), int(e["num_basis"])
        # arrays get the memory layout of a freshly built system, so a loaded fit
        # computes exactly like the original
        knots, _, _, _, _, _, d1 = _reference_space(m, num_basis, degree)
        interval = Interval(*e["interval"])
        coef = _readonly(e["coef"])
        dphi = (d1 @ coef).T / interval.width
        dphi.setflags(write=False)
        eig = EigenSystem(interval, m, degree, knots, coef, _readonly(e["rho"]),
                          _readonly(e["grid"]), _readonly(e["quad_weights"]),
                          _readonly(e["weight"]), _readonly(e["phi"], "F"), dphi)
        return SingleIndexFit(a=_readonly(d["a"]), beta=_readonly(d["beta"]),
                              gamma=_readonly(d["gamma"]), lam=float(d["lam"]), eig=eig,
                              index_range=tuple(float(x) for x in d["index_range"]),
                              objective_trace=_readonly(d["objective_trace"]), n=int(d["n"]),
                              converged=bool(d["converged"]), n_iter=int(d["n_iter"]),
                              gcv=float(d["gcv"]), config=config_from_dict(d["config"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed fit document: {exc}") from exc


def dumps(doc: dict) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_fit(fit: SingleIndexFit, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(fit_to_dict(fit)))


def load_fit(path) -> SingleIndexFit:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return fit_from_dict(doc)


def band_csv(band: BandResult) -> str:
    """Band grid as CSV text with columns ``s, center, lower, upper``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "center", "lower", "upper"])
    for row in zip(band.grid, band.center, band.lower, band.upper):
        w.writerow([f"{float(v):.17g}" for v in row])
    return buf.getvalue()


def write_band_csv(band: BandResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(band_csv(band))
