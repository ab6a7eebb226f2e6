"""Synthetic data settings and Monte-Carlo experiments.

Covariates, link and error laws follow the three-setting design with
``p = 6``, ``q = 1`` and ``g0(s) = s^2``.  Every experiment draws replicate
``r`` of cell ``(setting, n)`` from its own substream, so reps can run in any
order, on any number of workers, and shrinking ``mc_reps`` leaves the earlier
reps untouched.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng as rng_mod
from .eigensystem import Interval
from .exceptions import SimSplineError
from .inference import (BootstrapConfig, band_from_sample, duality_test, joint_from_sample,
                        relevant_from_sample, run_bootstrap)
from .model import Dataset, FitConfig, Truth, fit as fit_model, l2_risk
from .parallel import parallel_map

log = logging.getLogger(__name__)

ERROR_MODES = ("normal", "heteroscedastic_lognormal_variance", "signed_beta")
BETA0 = np.array([1.3, -1.3, 1.0, -0.5, -0.5, -0.5]) / np.linalg.norm(
    [1.3, -1.3, 1.0, -0.5, -0.5, -0.5])
GAMMA0 = np.array([1.0])
# population range of X^T beta0
SUPPORT = Interval(-1.04, 1.00)
JOINT_X0 = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 1.0])
JOINT_Z0 = np.array([1.0])

EXPERIMENT_IDS = {"coverage": 1, "power": 2, "joint": 3, "risk": 4}


def g0(s):
    return np.asarray(s, dtype=float) ** 2


def g0_sup() -> float:
    """Sup-norm of the true link over the population index range."""
    return float(max(g0(SUPPORT.lo), g0(SUPPORT.hi)))


TRUTH = Truth(g0=g0, beta0=BETA0, gamma0=GAMMA0)


@dataclass(frozen=True)
class SimSetting:
    n: int
    error_mode: str = "normal"
    seed: int = 0
    center_signed_beta: bool = True

    def __post_init__(self):
        if self.n < 50:
            raise ValueError("n must be at least 50")
        if self.error_mode not in ERROR_MODES:
            raise ValueError(f"unknown error mode {self.error_mode!r}")

    @classmethod
    def numbered(cls, setting: int, n: int, seed: int = 0, **kw) -> "SimSetting":
        return cls(n=n, error_mode=ERROR_MODES[int(setting) - 1], seed=seed, **kw)


def _logistic(t):
    return 1.0 / (1.0 + np.exp(-t))


def gen_dataset(setting: SimSetting, gen: Optional[np.random.Generator] = None):
    """Draw one sample; returns ``(Dataset, Truth)``."""
    gen = np.random.default_rng(setting.seed) if gen is None else gen
    n = setting.n
    x1 = gen.uniform(-1, 1, n)
    x2 = gen.uniform(-1, 1, n)
    u1 = gen.uniform(-1, 1, n)
    u2 = gen.uniform(-1, 1, n)
    x3 = 0.2 * x1 + 0.2 * (x2 + 2) ** 2 + 0.2 * u1
    x4 = 0.1 + 0.1 * (x1 + x2) + 0.3 * (x1 + 1.5) ** 2 + 0.2 * u2
    x5 = (gen.uniform(size=n) < _logistic(x1)).astype(float)
    x6 = (gen.uniform(size=n) < _logistic(x2)).astype(float)
    x = np.column_stack([x1, x2, x3, x4, x5, x6])
    s = x @ BETA0
    z = 2.0 * (gen.uniform(size=n) < _logistic(s)).astype(float) - 1.0
    lin = z * GAMMA0[0]
    if setting.error_mode == "normal":
        eps = gen.standard_normal(n)
    elif setting.error_mode == "heteroscedastic_lognormal_variance":
        eps = np.sqrt(np.log(2.0 + s ** 2 + lin)) * gen.standard_normal(n)
    else:
        p_xi = _logistic(s + lin)
        xi = gen.uniform(size=n) < p_xi
        eps = np.where(xi, -1.0, 1.0) * gen.beta(2.0, 3.0, n)
        if setting.center_signed_beta:
            eps = eps - 0.4 * (1.0 - 2.0 * p_xi)
    y = g0(s) + lin + eps
    return Dataset(y=y, x=x, z=z[:, None]), TRUTH


def _rep_generator(seed: int, experiment: str, setting: int, n: int, rep: int):
    return rng_mod.substream(seed, rng_mod.STREAM_SIM, EXPERIMENT_IDS[experiment],
                             setting, n, rep)


def _rep_data(seed, experiment, setting, n, rep, center=True):
    gen = _rep_generator(seed, experiment, setting, n, rep)
    st = SimSetting.numbered(setting, n, center_signed_beta=center)
    data, truth = gen_dataset(st, gen)
    fit_seed = int(gen.integers(2**63))
    return data, truth, fit_seed


def binomial_se(p: float, reps: int) -> float:
    if reps <= 0:
        return float("nan")
    return float(np.sqrt(p * (1.0 - p) / reps))


@dataclass
class ExperimentReport:
    name: str
    config: dict
    cells: list = field(default_factory=list)
    reps: int = 0
    failures: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"schema": "sim-spline/1", "kind": "experiment", "name": self.name,
                "config": self.config, "reps": self.reps, "failures": self.failures,
                "cells": self.cells}

    def write(self, out_dir, include_time: bool = False) -> list[str]:
        """Write ``<name>.json`` plus ``<name>.csv`` figure data; returns paths."""
        os.makedirs(out_dir, exist_ok=True)
        doc = self.to_dict()
        if include_time:
            doc["wall_time"] = self.wall_time
        jpath = os.path.join(out_dir, f"{self.name}.json")
        with open(jpath, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        cpath = os.path.join(out_dir, f"{self.name}.csv")
        keys = sorted({k for c in self.cells for k in c})
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for c in self.cells:
                w.writerow([_fmt(c.get(k, "")) for k in keys])
        return [jpath, cpath]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


# ---------------------------------------------------------------------------
# per-rep workers (module level so they pickle)
# ---------------------------------------------------------------------------

def _coverage_rep(args):
    seed, setting, n, rep, alphas, boot, fit_cfg = args
    data, truth, fseed = _rep_data(seed, "coverage", setting, n, rep)
    f = fit_model(data, fit_cfg.replace(seed=fseed))
    sample = run_bootstrap(data, f, boot.replace(seed=fseed))
    out = {}
    for a in alphas:
        band = band_from_sample(f, sample, a)
        out[a] = bool(np.all(np.abs(truth.g0(band.grid) - band.center)
                             <= band.upper - band.center))
    return out


def _power_rep(args):
    seed, setting, n, rep, deltas, alpha, boot, fit_cfg = args
    data, truth, fseed = _rep_data(seed, "power", setting, n, rep)
    f = fit_model(data, fit_cfg.replace(seed=fseed))
    sample = run_bootstrap(data, f, boot.replace(seed=fseed))
    zero = np.zeros_like
    band = band_from_sample(f, sample, alpha)
    alg2, dual = [], []
    for d in deltas:
        alg2.append(relevant_from_sample(f, sample, zero, d, alpha).reject)
        dual.append(duality_test(band, zero, d))
    return alg2, dual


def _joint_rep(args):
    seed, setting, n, rep, y0s, alphas, boot, fit_cfg = args
    data, truth, fseed = _rep_data(seed, "joint", setting, n, rep)
    f = fit_model(data, fit_cfg.replace(seed=fseed))
    sample = run_bootstrap(data, f, boot.replace(seed=fseed), x0=JOINT_X0, z0=JOINT_Z0)
    return {(y0, a): joint_from_sample(f, sample, JOINT_X0, JOINT_Z0, y0, a,
                             boot.literal_tnb).reject
            for y0 in y0s for a in alphas}


def _risk_rep(args):
    seed, setting, n, rep, fit_cfg = args
    data, truth, fseed = _rep_data(seed, "risk", setting, n, rep)
    f = fit_model(data, fit_cfg.replace(seed=fseed))
    return l2_risk(f, truth, interval=SUPPORT)


def _guarded_call(worker, args):
    try:
        return worker(args)
    except (SimSplineError, np.linalg.LinAlgError) as exc:
        log.warning("rep failed: %s", exc)
        return None


def _run(worker, tasks, threads):
    # failed reps come back as None and are counted by the caller
    return parallel_map(functools.partial(_guarded_call, worker), tasks, threads)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_coverage(settings: Sequence[int] = (1,), n_list: Sequence[int] = (200,),
                 alpha_list: Sequence[float] = (0.10, 0.05), mc_reps: int = 100, B: int = 200,
                 seed: int = 0, threads: int = 1, fit_config: FitConfig = FitConfig(),
                 boot_config: Optional[BootstrapConfig] = None) -> ExperimentReport:
    """Simultaneous-band coverage of ``g0`` on the band grid."""
    t0 = time.perf_counter()
    boot = (boot_config or BootstrapConfig(interval=(SUPPORT.lo, SUPPORT.hi))).replace(B=B)
    report = ExperimentReport("coverage", {"settings": list(settings), "n_list": list(n_list),
                                           "alpha_list": list(alpha_list), "mc_reps": mc_reps,
                                           "B": B, "seed": seed})
    for st in settings:
        for n in n_list:
            tasks = [(seed, st, n, r, tuple(alpha_list), boot, fit_config)
                     for r in range(mc_reps)]
            res = [r for r in _run(_coverage_rep, tasks, threads) if r is not None]
            report.failures += mc_reps - len(res)
            for a in alpha_list:
                rate = float(np.mean([r[a] for r in res])) if res else float("nan")
                report.cells.append({"setting": st, "n": n, "alpha": a, "nominal": 1 - a,
                                     "coverage": rate, "se": binomial_se(rate, len(res)),
                                     "reps": len(res)})
    report.reps = mc_reps
    report.wall_time = time.perf_counter() - t0
    return report


def run_power_curve(setting: int = 1, n_list: Sequence[int] = (1000,),
                    delta_grid: Optional[Sequence[float]] = None, mc_reps: int = 100,
                    B: int = 200, alpha: float = 0.05, seed: int = 0, threads: int = 1,
                    fit_config: FitConfig = FitConfig(),
                    boot_config: Optional[BootstrapConfig] = None) -> ExperimentReport:
    """Rejection rates of the extremal-set test and the band-duality test versus Delta."""
    t0 = time.perf_counter()
    sup = g0_sup()
    if delta_grid is None:
        delta_grid = tuple(np.round(np.linspace(0.0, 1.5, 16) * sup, 12))
    boot = (boot_config or BootstrapConfig(interval=(SUPPORT.lo, SUPPORT.hi))).replace(B=B)
    report = ExperimentReport("power", {"setting": setting, "n_list": list(n_list),
                                        "delta_grid": list(delta_grid), "mc_reps": mc_reps,
                                        "B": B, "alpha": alpha, "seed": seed,
                                        "g0_sup": sup})
    for n in n_list:
        tasks = [(seed, setting, n, r, tuple(delta_grid), alpha, boot, fit_config)
                 for r in range(mc_reps)]
        res = [r for r in _run(_power_rep, tasks, threads) if r is not None]
        report.failures += mc_reps - len(res)
        alg2 = np.array([r[0] for r in res], dtype=float)
        dual = np.array([r[1] for r in res], dtype=float)
        for k, d in enumerate(delta_grid):
            p2 = float(alg2[:, k].mean()) if res else float("nan")
            pd = float(dual[:, k].mean()) if res else float("nan")
            report.cells.append({"setting": setting, "n": n, "delta": float(d),
                                 "delta_over_sup": float(d) / sup,
                                 "reject_extremal": p2, "se_extremal": binomial_se(p2, len(res)),
                                 "reject_duality": pd, "se_duality": binomial_se(pd, len(res)),
                                 "reps": len(res)})
    report.reps = mc_reps
    report.wall_time = time.perf_counter() - t0
    return report


def run_joint(setting: int = 1, n_list: Sequence[int] = (200,), y0_list=(1.0, 0.0),
              alpha_list: Sequence[float] = (0.10, 0.05), mc_reps: int = 100, B: int = 200,
              seed: int = 0, threads: int = 1, fit_config: FitConfig = FitConfig(),
              boot_config: Optional[BootstrapConfig] = None) -> ExperimentReport:
    """Rejection rates of the joint test at ``x = (0,0,1,0,1,1)``, ``z = 1``."""
    t0 = time.perf_counter()
    boot = (boot_config or BootstrapConfig()).replace(B=B)
    report = ExperimentReport("joint", {"setting": setting, "n_list": list(n_list),
                                        "y0_list": list(y0_list),
                                        "alpha_list": list(alpha_list), "mc_reps": mc_reps,
                                        "B": B, "seed": seed,
                                        "literal_tnb": boot.literal_tnb})
    for n in n_list:
        tasks = [(seed, setting, n, r, tuple(y0_list), tuple(alpha_list), boot, fit_config)
                 for r in range(mc_reps)]
        res = [r for r in _run(_joint_rep, tasks, threads) if r is not None]
        report.failures += mc_reps - len(res)
        for y0 in y0_list:
            for a in alpha_list:
                rate = float(np.mean([r[(y0, a)] for r in res])) if res else float("nan")
                report.cells.append({"setting": setting, "n": n, "y0": float(y0), "alpha": a,
                                     "reject": rate, "se": binomial_se(rate, len(res)),
                                     "reps": len(res)})
    report.reps = mc_reps
    report.wall_time = time.perf_counter() - t0
    return report


def run_risk(setting: int = 1, n_list: Sequence[int] = (200, 1000), mc_reps: int = 50,
             seed: int = 0, threads: int = 1,
             fit_config: FitConfig = FitConfig()) -> ExperimentReport:
    """Quartiles (boxplot five-number summary) of the L2-risk per sample size."""
    t0 = time.perf_counter()
    report = ExperimentReport("risk", {"setting": setting, "n_list": list(n_list),
                                       "mc_reps": mc_reps, "seed": seed})
    for n in n_list:
        tasks = [(seed, setting, n, r, fit_config) for r in range(mc_reps)]
        res = np.array([r for r in _run(_risk_rep, tasks, threads) if r is not None])
        report.failures += mc_reps - res.size
        q = np.quantile(res, [0.0, 0.25, 0.5, 0.75, 1.0]) if res.size else [np.nan] * 5
        report.cells.append({"setting": setting, "n": n, "min": float(q[0]), "q1": float(q[1]),
                             "median": float(q[2]), "q3": float(q[3]), "max": float(q[4]),
                             "mean": float(res.mean()) if res.size else float("nan"),
                             "reps": int(res.size)})
    report.reps = mc_reps
    report.wall_time = time.perf_counter() - t0
    return report
