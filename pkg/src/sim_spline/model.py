"""Penalized least-squares fitting of the partially linear single-index model.

    Y = g(X^T beta) + Z^T gamma + eps

The link ``g`` lives in the span of the leading ``v`` data-adaptive
eigenfunctions; fitting alternates an eigenbasis ridge solve for
``(g, gamma)`` with a curvilinear line search for ``beta`` on the unit
sphere, rebuilding the eigensystem from the current index each round.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import BSpline

from . import rng as rng_mod
from .eigensystem import (DEFAULT_NUM_BASIS, EigenSystem, Interval, apply_m_lambda,
                          build_eigensystem, estimate_density)
from ._kernels import path_losses
from .exceptions import (DataError, InitializationError, PathDegenerateError,
                         SingularDesignError)

log = logging.getLogger(__name__)

MULTIPLIER_MAX = 1.0 + np.sqrt(2.0)
GOLDEN_ITERS = 60
SCAN_STEPS = 24
PATIENCE = 3
INIT_KNOTS = 8
ACCEPT_RTOL = 1e-12
DEFAULT_GCV_GRID = tuple(np.logspace(-8, 0, 30))
DEFAULT_V_GRID = (10, 15, 20, 30, 40)


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        z = np.empty((y.size, 0)) if self.z is None else np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if x.shape[0] != y.size or z.shape[0] != y.size:
            raise DataError("y, x and z must have the same number of rows")
        # private C-ordered copies: strided views take different BLAS paths, so a
        # pickled (contiguous) copy in a worker would round differently
        y, x, z = (np.array(a, dtype=float, order="C") for a in (y, x, z))
        n, p, q = y.size, x.shape[1], z.shape[1]
        if p < 1:
            raise DataError("x needs at least one column")
        if n <= p + q + 5:
            raise DataError(f"need n > p + q + 5, got n={n}, p={p}, q={q}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DataError("data contain non-finite entries")
        if np.all(np.ptp(x, axis=0) == 0):
            raise DataError("all columns of x are constant")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class FitConfig:
    m: int = 3
    num_basis: int = DEFAULT_NUM_BASIS
    v: Union[int, str] = "auto"
    lam: Union[float, str] = "gcv"
    gcv_grid: tuple = DEFAULT_GCV_GRID
    max_outer_iter: int = 50
    tol: float = 1e-6
    n_init_directions: int = 100
    seed: int = 0
    v_grid: tuple = DEFAULT_V_GRID
    cv_folds: int = 5
    interval_extension: float = 0.05
    density_grid: int = 256
    sigma0sq: float = 1.0

    def __post_init__(self):
        if not self.gcv_grid or not self.v_grid:
            raise ValueError("tuning grids must be nonempty")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.v != "auto" and int(self.v) <= self.m:
            raise ValueError("v must exceed m")
        if self.lam != "gcv" and not float(self.lam) > 0:
            raise ValueError("lambda must be positive")
        if min(self.gcv_grid) <= 0:
            raise ValueError("gcv grid must be positive")

    def replace(self, **kw) -> "FitConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True, eq=False)
class SingleIndexFit:
    a: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    lam: float
    eig: EigenSystem
    index_range: tuple  # (min, max) of the fitted index over the sample
    objective_trace: np.ndarray
    n: int
    converged: bool
    n_iter: int
    gcv: float
    config: FitConfig = field(repr=False)

    @property
    def interval(self) -> Interval:
        return self.eig.interval

    @property
    def v(self) -> int:
        return self.a.size

    @property
    def m(self) -> int:
        return self.eig.m

    @property
    def a_tilde(self) -> np.ndarray:
        return bias_adjust(self)

    @property
    def scale(self) -> float:
        """``n^(-1/2) lam^(-1/(4m))``, the band half-width per unit quantile."""
        return 1.0 / (np.sqrt(self.n) * self.lam ** (1.0 / (4 * self.m)))


def sign_normalize(beta: np.ndarray) -> np.ndarray:
    """Unit vector with its first nonzero component positive."""
    beta = np.asarray(beta, dtype=float)
    beta = beta / np.linalg.norm(beta)
    nz = np.flatnonzero(beta)
    if nz.size and beta[nz[0]] < 0:
        beta = -beta
    return beta


def check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    if not (np.all(w > 0) and np.all(w <= MULTIPLIER_MAX + 1e-12)):
        raise ValueError("weights must lie in (0, 1 + sqrt(2)]")
    return w


# ---------------------------------------------------------------------------
# initial direction
# ---------------------------------------------------------------------------

def _poly_spline_design(s: np.ndarray, n_knots: int = INIT_KNOTS) -> np.ndarray:
    lo, hi = s.min(), s.max()
    inner = np.unique(np.quantile(s, np.linspace(0, 1, n_knots + 2)[1:-1]))
    inner = inner[(inner > lo) & (inner < hi)]
    t = np.r_[[lo] * 4, inner, [hi] * 4]
    return BSpline.design_matrix(s, t, 3).toarray()


def initial_beta(data: Dataset, config: FitConfig, rng_seed: Optional[int] = None) -> np.ndarray:
    """Best of ``C`` random directions by median absolute residual.

    Each candidate index is fed to a cubic regression spline (8 interior
    knots at index quantiles) plus the linear Z part.
    """
    seed = config.seed if rng_seed is None else rng_seed
    gen = rng_mod.substream(seed, rng_mod.STREAM_INIT)
    draws = gen.standard_normal((config.n_init_directions, data.p))
    # fewer knots on tiny samples so the spline fit stays overdetermined
    n_knots = min(INIT_KNOTS, data.n - data.q - 5)
    best, best_crit = None, np.inf
    for j, nrm in enumerate(draws):
        if not np.any(nrm):
            continue
        kappa = sign_normalize(nrm)
        s = data.x @ kappa
        if np.ptp(s) == 0:
            continue
        design = np.hstack([_poly_spline_design(s, n_knots), data.z])
        coef, _, rank, _ = np.linalg.lstsq(design, data.y, rcond=None)
        if rank < design.shape[1]:
            continue
        crit = np.median(np.abs(data.y - design @ coef))
        if crit < best_crit:  # strict: lowest index wins ties
            best, best_crit = kappa, crit
    if best is None:
        raise InitializationError("every candidate direction gave a singular spline fit")
    return best


# ---------------------------------------------------------------------------
# ridge solve and GCV
# ---------------------------------------------------------------------------

def _penalty_diag(rho: np.ndarray, q: int) -> np.ndarray:
    return np.r_[np.asarray(rho, dtype=float), np.zeros(q)]


def _cholesky(mat: np.ndarray):
    try:
        c, low = sla.cho_factor(mat, lower=False, check_finite=False)
    except sla.LinAlgError as exc:
        raise SingularDesignError("ridge system is not positive definite") from exc
    d = np.abs(np.diag(c))
    if d.min() <= 1e-10 * d.max():
        raise SingularDesignError("ridge system is numerically singular")
    return c, low


def solve_ridge(phi, z, y, weights, lam: float, rho):
    """Exact minimizer of ``(y - Phi a - Z gamma)' W (...) + n lam a' diag(rho) a``.

    Returns ``(a, gamma)``.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    z = np.empty((n, 0)) if z is None else np.asarray(z, dtype=float).reshape(n, -1)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    design = np.hstack([phi, z])
    gram = design.T @ (design * w[:, None])
    rhs = design.T @ (w * y)
    mat = gram + n * lam * np.diag(_penalty_diag(rho, z.shape[1]))
    coef = sla.cho_solve(_cholesky(mat), rhs, check_finite=False)
    v = phi.shape[1]
    return coef[:v], coef[v:]


def _gcv_loop(design, y, gram, rhs, pen, lam_grid):
    n = y.size
    scores, coefs = [], []
    for lam in lam_grid:
        try:
            cf = _cholesky(gram + n * lam * np.diag(pen))
        except SingularDesignError:
            scores.append(np.inf)
            coefs.append(None)
            continue
        coef = sla.cho_solve(cf, rhs, check_finite=False)
        tr = np.trace(sla.cho_solve(cf, gram, check_finite=False))
        resid = y - design @ coef
        denom = 1.0 - tr / n
        scores.append(np.mean(resid ** 2) / denom ** 2 if denom > 0 else np.inf)
        coefs.append(coef)
    return np.asarray(scores), coefs


def _gcv_all(design, y, w, pen, lam_grid):
    """GCV score and coefficients for every lambda in ``lam_grid``.

    With ``G = L L'`` and ``L^-1 diag(pen) L^-T = U diag(mu) U'``, every
    ridge solve and hat trace on the grid comes from one factorization:
    ``tr H = sum 1 / (1 + n lam mu)``.  Ill-conditioned Gram matrices fall
    back to one Cholesky per lambda.
    """
    n = y.size
    gram = design.T @ (design * w[:, None])
    rhs = design.T @ (w * y)
    try:
        chol = sla.cholesky(gram, lower=True, check_finite=False)
    except sla.LinAlgError:
        return _gcv_loop(design, y, gram, rhs, pen, lam_grid)
    d = np.abs(np.diag(chol))
    if d.min() <= 1e-7 * d.max():
        return _gcv_loop(design, y, gram, rhs, pen, lam_grid)
    li_p = sla.solve_triangular(chol, np.diag(pen), lower=True, check_finite=False)
    mmat = sla.solve_triangular(chol, li_p.T, lower=True, check_finite=False)
    mu, u = np.linalg.eigh(0.5 * (mmat + mmat.T))
    mu = np.maximum(mu, 0.0)
    r_t = u.T @ sla.solve_triangular(chol, rhs, lower=True, check_finite=False)
    back = sla.solve_triangular(chol, u, lower=True, trans="T", check_finite=False)
    scale = 1.0 / (1.0 + n * np.outer(mu, np.asarray(lam_grid, dtype=float)))  # (k, L)
    coef_all = back @ (r_t[:, None] * scale)
    resid = y[:, None] - design @ coef_all
    denom = 1.0 - scale.sum(axis=0) / n
    rss = np.mean(resid ** 2, axis=0)
    with np.errstate(divide="ignore"):
        scores = np.where(denom > 0, rss / np.where(denom > 0, denom, 1.0) ** 2, np.inf)
    return scores, [coef_all[:, j] for j in range(coef_all.shape[1])]


def gcv_score(data: Dataset, beta, lam: float, eig: EigenSystem, weights=None) -> float:
    """``n^-1 ||Y - Yhat||^2 / (1 - tr(H)/n)^2`` for the weighted ridge hat matrix."""
    w = check_weights(weights, data.n)
    design = np.hstack([eig.design(data.x @ np.asarray(beta, dtype=float)), data.z])
    pen = _penalty_diag(eig.rho, data.q)
    return float(_gcv_all(design, data.y, w, pen, [lam])[0][0])


def bias_adjust(fit: SingleIndexFit) -> np.ndarray:
    """Coefficients of ``g + M_lam g`` in the eigenbasis."""
    return fit.a + apply_m_lambda(fit.a, fit.lam, fit.eig.rho)


# ---------------------------------------------------------------------------
# index direction: gradient, sphere path, line search
# ---------------------------------------------------------------------------

def _ell(data, w, g_spl, interval, beta, gamma) -> float:
    u = np.clip(interval.to_unit(data.x @ beta), 0.0, 1.0)
    r = data.y - g_spl(u) - data.z @ gamma
    return float(np.mean(w * r * r))


def loss(data: Dataset, fit: SingleIndexFit, beta=None, weights=None) -> float:
    """Weighted mean squared residual of the bias-adjusted fit at ``beta``."""
    w = check_weights(weights, data.n)
    beta = fit.beta if beta is None else np.asarray(beta, dtype=float)
    return _ell(data, w, fit.eig.fast_function(fit.a_tilde), fit.interval, beta, fit.gamma)


def _grad(data, w, eig, a_t, beta, gamma) -> np.ndarray:
    s = data.x @ beta
    r = data.y - eig.evaluate(a_t, s) - data.z @ gamma
    gp = eig.evaluate(a_t, s, deriv=1)
    return -2.0 / data.n * (data.x.T @ (w * gp * r))


def grad_beta(data: Dataset, fit: SingleIndexFit, weights=None) -> np.ndarray:
    """Gradient in beta of the weighted loss of the bias-adjusted fit."""
    w = check_weights(weights, data.n)
    return _grad(data, w, fit.eig, fit.a_tilde, fit.beta, fit.gamma)


def beta_path(beta, b, tau: float) -> np.ndarray:
    """Norm-preserving curve through ``beta`` with initial direction ``-(I - beta beta') b``."""
    beta = np.asarray(beta, dtype=float)
    if tau == 0.0:
        return beta.copy()
    b = np.asarray(b, dtype=float)
    bb = float(beta @ b)
    nb2 = float(b @ b)
    t2 = tau * tau
    den = 4.0 - t2 * bb * bb + t2 * nb2
    if den < 1e-12:
        raise PathDegenerateError(f"path denominator {den} too small")
    out = (4.0 + t2 * (bb * bb - nb2) + 4.0 * tau * bb) / den * beta - 4.0 * tau / den * b
    return out / np.linalg.norm(out)


def tau_bounds(beta, b) -> tuple[float, float]:
    """Step range keeping the leading nonzero coordinate of ``beta`` positive."""
    beta = np.asarray(beta, dtype=float)
    b = np.asarray(b, dtype=float)
    bb = float(beta @ b)
    dd = float(b @ b) - bb * bb
    if dd <= 1e-14 * max(float(b @ b), 1e-300):
        return -1.0, 1.0
    k = np.flatnonzero(beta)[0]
    c = bb - b[k] / beta[k]
    root = np.sqrt(c * c + dd)
    return (2 * c - 2 * root) / dd, (2 * c + 2 * root) / dd


def _golden(f: Callable[[float], float], lo: float, hi: float, iters: int = GOLDEN_ITERS):
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _bracketed_min(f, lo: float, hi: float, f0: float, f_many=None):
    """Coarse geometric scan towards 0 on both sides, then golden refinement.

    The loss along the path is multimodal over wide brackets; the scan
    locates the basin, golden-section search polishes within its neighbours.
    ``f_many`` optionally evaluates the scan points in one batch.
    """
    side = [hi * 0.5 ** k for k in range(SCAN_STEPS)] + [lo * 0.5 ** k for k in range(SCAN_STEPS)]
    taus = np.array(sorted(side + [0.0]))
    if f_many is None:
        vals = np.array([f0 if t == 0.0 else f(t) for t in taus])
    else:
        vals = np.asarray(f_many(taus), dtype=float)
        vals[taus == 0.0] = f0
    k = int(np.argmin(vals))
    left = taus[max(k - 1, 0)]
    right = taus[min(k + 1, taus.size - 1)]
    tau, f_ref = _golden(f, left, right)
    if vals[k] < f_ref:
        return float(taus[k]), float(vals[k])
    return tau, f_ref


def _line_search(data, w, eig, a_t, beta, gamma):
    g_spl = eig.fast_function(a_t)
    interval = eig.interval
    f0 = _ell(data, w, g_spl, interval, beta, gamma)
    b = _grad(data, w, eig, a_t, beta, gamma)
    if not np.any(b):
        return beta, f0
    t_lo, t_hi = tau_bounds(beta, b)
    eps = 1e-9 * (t_hi - t_lo)
    s_beta = data.x @ beta
    s_b = data.x @ b
    resid0 = data.y - data.z @ gamma
    bb, nb2 = float(beta @ b), float(b @ b)
    coefs, left = g_spl.coefs, g_spl.left

    def f_many(taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        return path_losses(taus, s_beta, s_b, bb, nb2, interval.lo, interval.width,
                           coefs, left, resid0, w)

    def f(tau):
        return float(f_many(tau)[0])

    tau, f_new = _bracketed_min(f, t_lo + eps, t_hi - eps, f0, f_many)
    # gains at round-off level are noise, not descent
    floor = f0 - ACCEPT_RTOL * abs(f0)
    if f_new < floor:
        new = sign_normalize(beta_path(beta, b, tau))
        f_chk = _ell(data, w, g_spl, interval, new, gamma)
        if f_chk < floor:
            return new, f_chk
    return beta, f0


def update_beta(data: Dataset, fit: SingleIndexFit, weights=None):
    """One guarded line-search step; never increases the loss."""
    w = check_weights(weights, data.n)
    return _line_search(data, w, fit.eig, fit.a_tilde, fit.beta, fit.gamma)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

def index_interval(s: np.ndarray, extension: float = 0.05) -> Interval:
    lo, hi = float(np.min(s)), float(np.max(s))
    pad = extension * (hi - lo)
    return Interval(lo - pad, hi + pad)


def _eigensystem_at(data, beta, config, v):
    s = data.x @ beta
    dens = estimate_density(s, index_interval(s, config.interval_extension),
                            config.density_grid)
    return build_eigensystem(dens, config.sigma0sq, config.m, config.num_basis, v)


def _select_lambda(design, y, w, pen, lam_grid):
    scores, coefs = _gcv_all(design, y, w, pen, lam_grid)
    if not np.any(np.isfinite(scores)):
        raise SingularDesignError("no lambda in the GCV grid gives a usable fit")
    k = int(np.argmin(scores))
    return float(lam_grid[k]), float(scores[k])


def select_v(data: Dataset, beta, config: FitConfig) -> int:
    """Five-fold CV over ``config.v_grid`` at a fixed index direction."""
    n_train = data.n - int(np.ceil(data.n / config.cv_folds))
    grid = sorted(v for v in config.v_grid if config.m < v < n_train - data.q)
    if not grid:
        # sample too small for every grid value: keep as many as CV could fit
        return max(config.m + 1, n_train - data.q - 1)
    eig = _eigensystem_at(data, beta, config, max(grid))
    s = data.x @ beta
    full = eig.design(s)
    gen = rng_mod.substream(config.seed, rng_mod.STREAM_CV)
    folds = np.array_split(gen.permutation(data.n), config.cv_folds)
    errors = []
    for v in grid:
        pen = _penalty_diag(eig.rho[:v], data.q)
        design = np.hstack([full[:, :v], data.z])
        sse = 0.0
        for test in folds:
            train = np.setdiff1d(np.arange(data.n), test)
            d_tr, y_tr = design[train], data.y[train]
            w_tr = np.ones(train.size)
            if config.lam == "gcv":
                lam, _ = _select_lambda(d_tr, y_tr, w_tr, pen, config.gcv_grid)
            else:
                lam = float(config.lam)
            try:
                gram = d_tr.T @ d_tr + train.size * lam * np.diag(pen)
                coef = sla.cho_solve(_cholesky(gram), d_tr.T @ y_tr)
            except SingularDesignError:
                sse = np.inf
                break
            sse += float(np.sum((data.y[test] - design[test] @ coef) ** 2))
        errors.append(sse / data.n)
    return grid[int(np.argmin(errors))]


@dataclass
class _State:
    beta: np.ndarray
    eig: EigenSystem
    a: np.ndarray
    gamma: np.ndarray
    obj: float
    lam: float


def _penalized_objective(data, w, eig, design, a, gamma, lam):
    r = data.y - design[:, :a.size] @ a - data.z @ gamma
    return 0.5 * float(np.mean(w * r * r)) + 0.5 * lam * float(np.sum(eig.rho * a * a))


def fit(data: Dataset, config: FitConfig = FitConfig(), weights=None, *,
        start: Optional[np.ndarray] = None, v: Optional[int] = None,
        lam: Optional[float] = None) -> SingleIndexFit:
    """Fit ``(g, beta, gamma)`` by alternating ridge and index updates.

    ``start`` skips the random initializer (warm start); ``v`` and ``lam``
    override the config's tuning.  Non-convergence is reported through
    ``SingleIndexFit.converged`` rather than raised.
    """
    w = check_weights(weights, data.n)
    beta = sign_normalize(start) if start is not None else initial_beta(data, config)
    if v is None:
        v = select_v(data, beta, config) if config.v == "auto" else int(config.v)
    fixed_lam = lam if lam is not None else (None if config.lam == "gcv" else float(config.lam))
    lam_grid = np.asarray(config.gcv_grid, dtype=float)

    trace: list[float] = []
    best: Optional[_State] = None
    prev = None
    stall = 0
    converged = False
    n_iter = 0
    for _ in range(config.max_outer_iter):
        n_iter += 1
        eig = _eigensystem_at(data, beta, config, v)
        design = np.hstack([eig.design(data.x @ beta), data.z])
        pen = _penalty_diag(eig.rho, data.q)
        if fixed_lam is None:
            lam_it, _ = _select_lambda(design, data.y, w, pen, lam_grid)
        else:
            lam_it = fixed_lam
        a, gamma = solve_ridge(design[:, :v], data.z, data.y, w, lam_it, eig.rho)
        obj = _penalized_objective(data, w, eig, design, a, gamma, lam_it)
        if best is None or obj < best.obj:
            best = _State(beta, eig, a, gamma, obj, lam_it)
            stall = 0
        else:
            stall += 1
        trace.append(best.obj)
        if prev is not None and abs(prev - obj) <= config.tol * abs(prev):
            converged = True
            break
        if stall >= PATIENCE:
            converged = True  # rebuilt iterates keep landing above the best one
            break
        prev = obj
        a_t = a + apply_m_lambda(a, lam_it, eig.rho)
        new_beta, _ = _line_search(data, w, eig, a_t, beta, gamma)
        if np.array_equal(new_beta, beta):
            converged = True
            break
        beta = new_beta
    s = data.x @ best.beta
    design = np.hstack([best.eig.design(s), data.z])
    gcv = float(_gcv_all(design, data.y, w, _penalty_diag(best.eig.rho, data.q),
                         [best.lam])[0][0])
    if not converged:
        log.info("fit did not converge in %d outer iterations", config.max_outer_iter)
    return SingleIndexFit(a=best.a, beta=best.beta, gamma=best.gamma, lam=float(best.lam),
                          eig=best.eig, index_range=(float(s.min()), float(s.max())),
                          objective_trace=np.asarray(trace), n=data.n, converged=converged,
                          n_iter=n_iter, gcv=gcv, config=config)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def predict_g(fit: SingleIndexFit, s_points) -> np.ndarray:
    """Bias-adjusted link ``g + M_lam g`` at ``s_points`` (clamped into the interval)."""
    return fit.eig.evaluate(fit.a_tilde, np.asarray(s_points, dtype=float))


def predict(fit: SingleIndexFit, x, z=None) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = predict_g(fit, x @ fit.beta)
    if fit.gamma.size:
        z = np.asarray(z, dtype=float).reshape(x.shape[0], -1)
        out = out + z @ fit.gamma
    return out


@dataclass(frozen=True)
class Truth:
    g0: Callable[[np.ndarray], np.ndarray]
    beta0: np.ndarray
    gamma0: np.ndarray


def l2_risk(fit: SingleIndexFit, truth: Truth, interval: Optional[Interval] = None,
            n_points: int = 256) -> float:
    """Square root of integrated squared link error plus squared parameter errors."""
    iv = fit.interval if interval is None else interval
    s = np.linspace(iv.lo, iv.hi, n_points)
    link = np.trapezoid((predict_g(fit, s) - truth.g0(s)) ** 2, s)
    par = np.sum((fit.beta - np.asarray(truth.beta0)) ** 2)
    par += np.sum((fit.gamma - np.asarray(truth.gamma0, dtype=float).ravel()) ** 2)
    return float(np.sqrt(link + par))
