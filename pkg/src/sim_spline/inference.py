"""Multiplier-bootstrap inference for the index link and the full regression.

One bootstrap pass (``run_bootstrap``) refits the model under B independent
draws of two-point multiplier weights and stores the normalized deviation
processes ``G*_b(s) = (g*_b + M g*_b - g - M g)(s) / scale`` on a grid.
Bands, pointwise intervals, relevant-hypothesis tests and Delta sweeps are
all read off the same sample, so they agree replicate by replicate.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from . import rng as rng_mod
from .exceptions import BootstrapInstabilityError, SimSplineError
from .model import Dataset, SingleIndexFit, fit as fit_model, predict_g
from .parallel import parallel_map

log = logging.getLogger(__name__)

W_LOW = 1.0 - 1.0 / math.sqrt(2.0)
W_HIGH = 1.0 + math.sqrt(2.0)
P_LOW = 2.0 / 3.0


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 200
    alpha: float = 0.05
    seed: int = 0
    grid_size: int = 401
    reuse_lambda: bool = False
    literal_tnb: bool = False
    threads: int = 1
    max_drop_frac: float = 0.05
    interval: Optional[tuple] = None  # band grid range; default: observed fitted index range

    def __post_init__(self):
        if self.B < 100:
            raise ValueError("B must be at least 100")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.interval is not None and not self.interval[0] < self.interval[1]:
            raise ValueError("band interval must satisfy lo < hi")

    def replace(self, **kw) -> "BootstrapConfig":
        return dataclasses.replace(self, **kw)


def draw_multipliers(n: int, gen: np.random.Generator) -> np.ndarray:
    """i.i.d. weights equal to ``1 - 1/sqrt(2)`` w.p. 2/3 and ``1 + sqrt(2)`` w.p. 1/3."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.where(gen.random(n) < P_LOW, W_LOW, W_HIGH)


def empirical_quantile(values, level: float) -> float:
    """``inf{t : #{values <= t} / B >= level}``, the ceil(B * level)-th order statistic."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empty sample")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    k = math.ceil(v.size * level - 1e-12)
    return float(v[min(max(k, 1), v.size) - 1])


# ---------------------------------------------------------------------------
# bootstrap pass
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BootstrapSample:
    grid: np.ndarray
    center: np.ndarray  # bias-adjusted link of the main fit on the grid
    curves: np.ndarray  # (B_kept, P) normalized deviation processes
    point_values: Optional[np.ndarray]  # g*_b(x0' beta*_b) + z0' gamma*_b, if requested
    scale: float
    B: int
    dropped: int
    lams: np.ndarray = field(repr=False)

    @property
    def sup_stats(self) -> np.ndarray:
        return np.abs(self.curves).max(axis=1)


def band_grid(fit: SingleIndexFit, grid_size: int = 401, interval=None) -> np.ndarray:
    """Equispaced grid over ``interval``, by default the observed range of the fitted index."""
    lo, hi = fit.index_range if interval is None else interval
    return np.linspace(float(lo), float(hi), grid_size)


def _refit(data, fit, config, weights):
    lam = fit.lam if config.reuse_lambda else None
    return fit_model(data, fit.config, weights, start=fit.beta, v=fit.v, lam=lam)


def _replicate_chunk(args):
    data, fit, config, indices, grid, center, x0, z0, max_drop = args
    out = []
    dropped = 0
    for b in indices:
        if dropped > max_drop:
            break  # the pass is already lost; skip the remaining refits
        res = None
        for attempt in range(2):
            gen = rng_mod.substream(config.seed, rng_mod.STREAM_BOOT, b, attempt)
            w = draw_multipliers(data.n, gen)
            try:
                rf = _refit(data, fit, config, w)
            except (SimSplineError, sla.LinAlgError) as exc:
                log.debug("replicate %d attempt %d failed: %s", b, attempt, exc)
                continue
            if not rf.converged:
                continue
            curve = (predict_g(rf, grid) - center) / fit.scale
            point = None
            if x0 is not None:
                point = float(predict_g(rf, [x0 @ rf.beta])[0])
                if rf.gamma.size:
                    point += float(z0 @ rf.gamma)
            res = (curve, point, rf.lam)
            break
        dropped += res is None
        out.append(res)
    return out


def run_bootstrap(data: Dataset, fit: SingleIndexFit, config: BootstrapConfig = BootstrapConfig(),
                  x0=None, z0=None) -> BootstrapSample:
    """Refit under B multiplier draws, warm-started at the main fit.

    A replicate that errors or fails to converge is retried once with a
    fresh weight draw and dropped if that fails too; more than
    ``max_drop_frac`` dropped raises ``BootstrapInstabilityError``.
    """
    grid = band_grid(fit, config.grid_size, config.interval)
    center = predict_g(fit, grid)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).ravel()
        z0 = np.zeros(0) if z0 is None else np.asarray(z0, dtype=float).ravel()
        if x0.size != fit.beta.size or z0.size != fit.gamma.size:
            raise ValueError("x0/z0 dimensions do not match the fit")
    threads = max(1, int(config.threads))
    n_chunks = min(config.B, 4 * threads) if threads > 1 else 1
    chunks = [c.tolist() for c in np.array_split(np.arange(config.B), n_chunks)]
    max_drop = math.floor(config.max_drop_frac * config.B)
    tasks = [(data, fit, config, c, grid, center, x0, z0, max_drop) for c in chunks]
    results = [r for part in parallel_map(_replicate_chunk, tasks, threads) for r in part]
    kept = [r for r in results if r is not None]
    dropped = len(results) - len(kept)
    if dropped > max_drop:
        raise BootstrapInstabilityError(
            f"{dropped} failed replicates among {len(results)} attempted "
            f"(limit {max_drop} of B={config.B})")
    curves = np.array([r[0] for r in kept])
    points = np.array([r[1] for r in kept]) if x0 is not None else None
    return BootstrapSample(grid=grid, center=center, curves=curves, point_values=points,
                           scale=fit.scale, B=config.B, dropped=dropped,
                           lams=np.array([r[2] for r in kept]))


# ---------------------------------------------------------------------------
# bands and intervals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BandResult:
    grid: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    quantile: float
    scale: float
    alpha: float
    B: int

    @property
    def half_width(self) -> float:
        return self.scale * self.quantile

    def to_dict(self) -> dict:
        return {"schema": "sim-spline/1", "kind": "band", "alpha": self.alpha, "B": self.B,
                "quantile": self.quantile, "scale": self.scale,
                "grid": self.grid.tolist(), "center": self.center.tolist(),
                "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def band_from_sample(fit: SingleIndexFit, sample: BootstrapSample, alpha: float) -> BandResult:
    q = empirical_quantile(sample.sup_stats, 1.0 - alpha)
    hw = sample.scale * q
    return BandResult(grid=sample.grid, center=sample.center, lower=sample.center - hw,
                      upper=sample.center + hw, quantile=q, scale=sample.scale, alpha=alpha,
                      B=sample.B)


def bootstrap_band(data: Dataset, fit: SingleIndexFit,
                   config: BootstrapConfig = BootstrapConfig()) -> BandResult:
    """Simultaneous ``1 - alpha`` band for the index link."""
    return band_from_sample(fit, run_bootstrap(data, fit, config), config.alpha)


def pointwise_interval(data: Dataset, fit: SingleIndexFit, config: BootstrapConfig, s,
                       sample: Optional[BootstrapSample] = None):
    """Endpoints ``g~(s) -/+ scale * Q_{1-alpha}{G*_b(s)}``; replicate curves are
    linearly interpolated between grid nodes."""
    sample = run_bootstrap(data, fit, config) if sample is None else sample
    s = float(s)
    lo_g, hi_g = sample.grid[0], sample.grid[-1]
    s_c = min(max(s, lo_g), hi_g)
    vals = np.array([np.interp(s_c, sample.grid, c) for c in sample.curves])
    q = empirical_quantile(vals, 1.0 - config.alpha)
    center = float(predict_g(fit, [s])[0])
    return center - sample.scale * q, center + sample.scale * q


# ---------------------------------------------------------------------------
# relevant hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RelevantTestResult:
    d_inf_hat: float
    delta: float
    critical: float
    scale: float
    reject: bool
    e_plus: np.ndarray
    e_minus: np.ndarray
    alpha: float
    sweep: Optional[list] = None
    delta_hat: Optional[float] = None
    boundary: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"schema": "sim-spline/1", "kind": "relevant_test", "d_inf_hat": self.d_inf_hat,
             "delta": self.delta, "critical": self.critical, "scale": self.scale,
             "threshold": self.delta + self.scale * self.critical, "reject": self.reject,
             "alpha": self.alpha, "e_plus": self.e_plus.tolist(),
             "e_minus": self.e_minus.tolist()}
        if self.sweep is not None:
            d["sweep"] = [{"delta": dl, "reject": r} for dl, r in self.sweep]
            d["delta_hat"] = self.delta_hat
            d["boundary"] = self.boundary
        return d


def extremal_sets(diff: np.ndarray, n: int):
    """Grid indices where ``+-diff`` is within a factor ``1 - n^-1/2`` of its sup-norm."""
    d_inf = float(np.max(np.abs(diff)))
    if d_inf == 0.0:
        idx = np.arange(diff.size)
        return d_inf, idx, idx
    cut = (1.0 - 1.0 / math.sqrt(n)) * d_inf
    return d_inf, np.flatnonzero(diff >= cut), np.flatnonzero(-diff >= cut)


def _extremal_critical(sample, e_plus, e_minus, alpha):
    parts = []
    if e_plus.size:
        parts.append(sample.curves[:, e_plus].max(axis=1))
    if e_minus.size:
        parts.append((-sample.curves[:, e_minus]).max(axis=1))
    stats = np.max(np.vstack(parts), axis=0)
    return empirical_quantile(stats, 1.0 - alpha)


def relevant_from_sample(fit: SingleIndexFit, sample: BootstrapSample, g_star: Callable,
                         delta: float, alpha: float) -> RelevantTestResult:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    diff = sample.center - np.asarray(g_star(sample.grid), dtype=float)
    d_inf, e_plus, e_minus = extremal_sets(diff, fit.n)
    crit = _extremal_critical(sample, e_plus, e_minus, alpha)
    reject = d_inf > delta + sample.scale * crit
    return RelevantTestResult(d_inf, float(delta), crit, sample.scale, bool(reject),
                              e_plus, e_minus, alpha)


def relevant_test(data: Dataset, fit: SingleIndexFit, config: BootstrapConfig,
                  g_star: Callable, delta: float) -> RelevantTestResult:
    """Test ``sup |g0 - g*| <= delta`` against ``> delta`` via extremal sets."""
    return relevant_from_sample(fit, run_bootstrap(data, fit, config), g_star, delta,
                                config.alpha)


def sweep_from_sample(fit, sample, g_star, delta_grid, alpha) -> RelevantTestResult:
    deltas = [float(d) for d in delta_grid]
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must be ascending")
    base = relevant_from_sample(fit, sample, g_star, deltas[0], alpha)
    thresh = base.scale * base.critical
    sweep = [(d, bool(base.d_inf_hat > d + thresh)) for d in deltas]
    accepted = [d for d, r in sweep if not r]
    return dataclasses.replace(base, sweep=sweep,
                               delta_hat=accepted[0] if accepted else None,
                               boundary=max(base.d_inf_hat - thresh, 0.0))


def relevant_sweep(data: Dataset, fit: SingleIndexFit, config: BootstrapConfig,
                   g_star: Callable, delta_grid: Sequence[float]) -> RelevantTestResult:
    """Decisions over an ascending Delta grid from one bootstrap pass.

    ``delta_hat`` is the smallest grid value not rejected; ``boundary`` is the
    exact cut ``d_inf_hat - scale * critical`` clipped at 0.
    """
    return sweep_from_sample(fit, run_bootstrap(data, fit, config), g_star, delta_grid,
                             config.alpha)


def duality_test(band: BandResult, g_star: Callable, delta: float) -> bool:
    """Reject when no function in the band stays within ``delta`` of ``g*``.

    That is, some grid point has the band interval and the tube interval
    ``[g* - delta, g* + delta]`` disjoint.
    """
    gs = np.asarray(g_star(band.grid), dtype=float)
    return bool(np.any((band.lower > gs + delta) | (band.upper < gs - delta)))


# ---------------------------------------------------------------------------
# joint hypothesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointTestResult:
    t_hat: float
    critical: float
    reject: bool
    alpha: float
    literal_tnb: bool

    def to_dict(self) -> dict:
        return {"schema": "sim-spline/1", "kind": "joint_test", **dataclasses.asdict(self)}


def _point_fit(fit, x0, z0) -> float:
    val = float(predict_g(fit, [np.asarray(x0, dtype=float) @ fit.beta])[0])
    if fit.gamma.size:
        val += float(np.asarray(z0, dtype=float).ravel() @ fit.gamma)
    return val


def joint_from_sample(fit: SingleIndexFit, sample: BootstrapSample, x0, z0, y0: float,
                      alpha: float, literal_tnb: bool = False) -> JointTestResult:
    if sample.point_values is None:
        raise ValueError("bootstrap sample carries no point values; pass x0/z0")
    root = 1.0 / sample.scale
    fitted = _point_fit(fit, x0, z0)
    t_hat = root * (fitted - y0)
    ref = y0 if literal_tnb else fitted
    t_star = root * (sample.point_values - ref)
    crit = empirical_quantile(t_star, 1.0 - alpha / 2.0)
    return JointTestResult(float(t_hat), crit, bool(abs(t_hat) > crit), alpha, literal_tnb)


def joint_test(data: Dataset, fit: SingleIndexFit, config: BootstrapConfig, x0, z0,
               y0: float) -> JointTestResult:
    """Test ``g0(x0' beta0) + z0' gamma0 = y0``."""
    sample = run_bootstrap(data, fit, config, x0=x0, z0=z0)
    return joint_from_sample(fit, sample, x0, z0, y0, config.alpha, config.literal_tnb)
