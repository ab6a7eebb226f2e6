"""Data-adaptive eigenbasis for the weighted smoothing-spline problem.

The eigenpairs ``(phi_j, rho_j)`` simultaneously diagonalize

    V(g1, g2) = int g1 g2 w ds        (w = sigma0^2 * density)
    J(g1, g2) = int g1^(m) g2^(m) ds

on a compact interval.  They are obtained from the Rayleigh-Ritz pencil
``J_B c = rho V_B c`` over a B-spline space; the natural boundary conditions
``phi^(l) = 0`` (``m <= l <= 2m-1``) of the underlying ODE come for free
because the variational problem leaves the boundary values unconstrained.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import BSpline, PPoly

from .exceptions import DegenerateSampleError, DomainError, NumericalError

ArrayLike = Union[np.ndarray, float, list]

DEFAULT_NUM_BASIS = 128
DEFAULT_GRID_SIZE = 256
DENSITY_FLOOR = 1e-3
QUAD_POINTS = 4
_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_unit(self, s):
        return (np.asarray(s, dtype=float) - self.lo) / self.width

    def check(self, s, clamp: bool = True) -> np.ndarray:
        """Validate points against the interval, clamping round-off overshoot."""
        s = np.asarray(s, dtype=float)
        tol = _DOMAIN_TOL * max(1.0, self.width)
        if s.size and (np.min(s) < self.lo - tol or np.max(s) > self.hi + tol):
            raise DomainError(
                f"points outside [{self.lo}, {self.hi}]: "
                f"range [{np.min(s)}, {np.max(s)}]")
        return np.clip(s, self.lo, self.hi) if clamp else s


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    interval: Interval
    grid: np.ndarray
    values: np.ndarray
    floor: float
    bandwidth: float
    raw_mass: float  # trapezoid mass inside the interval before flooring

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, self.grid, self.values)


def silverman_bandwidth(samples: np.ndarray) -> float:
    return 1.06 * float(np.std(samples, ddof=1)) * len(samples) ** (-0.2)


@functools.lru_cache(maxsize=8)
def _reflection_index(g: int):
    """Grid offsets (in steps) to a node, and to its images about each end."""
    k = np.arange(g)
    direct = np.abs(k[:, None] - k[None, :])
    low_img = k[:, None] + k[None, :]
    high_img = 2 * (g - 1) - low_img
    for arr in (direct, low_img, high_img):
        arr.setflags(write=False)
    return direct, low_img, high_img


def estimate_density(samples, interval: Interval,
                     grid_size: int = DEFAULT_GRID_SIZE) -> DensityEstimate:
    """Gaussian KDE on an equispaced grid, reflected at the interval ends.

    Reflection keeps all kernel mass inside the interval, so the estimate is
    a proper density on it without boundary leakage.  The result is floored
    at ``1e-3`` times its maximum and renormalized to unit mass.  Samples
    are linearly binned onto the grid first, which costs O(grid^2) instead
    of O(n * grid).
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0 or np.unique(x).size < 2:
        raise DegenerateSampleError("need at least two distinct samples")
    interval.check(x)
    h = silverman_bandwidth(x)
    grid = np.linspace(interval.lo, interval.hi, grid_size)
    # linear binning onto the grid, then an exact convolution of the bin
    # counts with the kernel and its mirror images at both ends
    dx = grid[1] - grid[0]
    pos = np.clip((x - interval.lo) / dx, 0.0, grid_size - 1.0)
    left = np.minimum(pos.astype(int), grid_size - 2)
    frac = pos - left
    counts = (np.bincount(left, 1.0 - frac, grid_size)
              + np.bincount(left + 1, frac, grid_size))
    offs = np.arange(2 * grid_size - 1) * (dx / h)
    kv = np.exp(-0.5 * offs * offs)
    direct, low_img, high_img = _reflection_index(grid_size)
    kmat = kv[direct] + kv[low_img] + kv[high_img]
    vals = kmat @ counts / (x.size * h * np.sqrt(2 * np.pi))
    raw_mass = float(np.trapezoid(vals, grid))
    floor = DENSITY_FLOOR * float(vals.max())
    vals = np.maximum(vals, floor)
    vals = vals / np.trapezoid(vals, grid)
    return DensityEstimate(interval, grid, vals, floor, h, raw_mass)


@functools.lru_cache(maxsize=16)
def _reference_space(m: int, num_basis: int, degree: int):
    """B-spline space on [0, 1] with quadrature, penalty Gram and null basis."""
    n_inner = num_basis - degree - 1
    if n_inner < 0:
        raise ValueError("num_basis too small for the spline degree")
    breaks = np.linspace(0.0, 1.0, n_inner + 2)
    knots = np.r_[np.zeros(degree), breaks, np.ones(degree)]
    gx, gw = np.polynomial.legendre.leggauss(QUAD_POINTS)
    a, b = breaks[:-1], breaks[1:]
    nodes = ((b - a)[:, None] * (gx + 1) / 2 + a[:, None]).ravel()
    qw = ((b - a)[:, None] * gw / 2).ravel()
    eye = np.eye(num_basis)
    design = BSpline.design_matrix(nodes, knots, degree).toarray()
    dm = BSpline(knots, eye, degree).derivative(m)(nodes)
    # square-root factor of the penalty Gram (J = R'R); working with R keeps
    # the small eigenvalues accurate, the explicit Gram has entries ~1e12
    r_ref = sla.qr(dm * np.sqrt(qw)[:, None], mode="r")[0][:num_basis]
    # exact B-spline coefficients of 1, u, ..., u^(m-1)
    poly = np.vander(nodes, m, increasing=True)
    null_coef = np.linalg.lstsq(design, poly, rcond=None)[0]
    d1 = BSpline(knots, eye, degree).derivative(1)(nodes)
    for arr in (knots, nodes, qw, design, r_ref, null_coef, d1):
        arr.setflags(write=False)
    return knots, nodes, qw, design, r_ref, null_coef, d1


def _default_degree(m: int) -> int:
    return max(3, m + 1)


class SpanPolynomial:
    """Spline on [0, 1] with equispaced breaks, stored as one polynomial per span.

    Calling it costs a gather and a Horner loop, which is much cheaper than
    a general B-spline evaluation when the same curve is probed many times.
    """

    def __init__(self, coefs: np.ndarray, left: np.ndarray):
        self.coefs = coefs  # (degree + 1, n_span), highest power first
        self.left = left
        self.n_span = left.size

    @classmethod
    def from_spline(cls, spl: BSpline) -> "SpanPolynomial":
        pp = PPoly.from_spline(spl)
        keep = np.diff(pp.x) > 0
        return cls(np.ascontiguousarray(pp.c[:, keep]), pp.x[:-1][keep])

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        i = np.minimum((u * self.n_span).astype(np.intp), self.n_span - 1)
        t = u - self.left[i]
        c = self.coefs[:, i]
        out = c[0]
        for ck in c[1:]:
            out = out * t + ck
        return out


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Truncated eigensystem sampled on the quadrature grid.

    ``coef`` holds the B-spline coefficients (reference knots on [0, 1]) of
    every eigenfunction, so evaluation off the grid is exact.
    """

    interval: Interval
    m: int
    degree: int
    knots: np.ndarray
    coef: np.ndarray  # (num_basis, v)
    rho: np.ndarray
    grid: np.ndarray
    quad_weights: np.ndarray
    weight: np.ndarray
    phi: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)

    @property
    def num_eigen(self) -> int:
        return self.rho.size

    @property
    def num_basis(self) -> int:
        return self.coef.shape[0]

    def truncate(self, v: int) -> "EigenSystem":
        if not self.m < v <= self.num_eigen:
            raise ValueError(f"cannot truncate {self.num_eigen} eigenpairs to {v}")
        return EigenSystem(self.interval, self.m, self.degree, self.knots,
                           self.coef[:, :v], self.rho[:v], self.grid,
                           self.quad_weights, self.weight, self.phi[:v],
                           self.dphi[:v])

    def function(self, a: np.ndarray, deriv: int = 0) -> BSpline:
        """Spline in unit coordinates for ``sum_j a_j phi_j`` (or its derivative)."""
        spl = BSpline(self.knots, self.coef @ np.asarray(a, dtype=float),
                      self.degree, extrapolate=False)
        return spl.derivative(deriv) if deriv else spl

    def fast_function(self, a: np.ndarray) -> "SpanPolynomial":
        """Same function as ``function(a)``, as a per-span polynomial (cheap to call)."""
        return SpanPolynomial.from_spline(self.function(a))

    def evaluate(self, a, s, deriv: int = 0) -> np.ndarray:
        """Evaluate ``sum_j a_j phi_j^(deriv)`` at ``s``, clamping into the interval."""
        u = np.clip(self.interval.to_unit(s), 0.0, 1.0)
        return self.function(a, deriv)(u) / self.interval.width ** deriv

    def design(self, s, deriv: int = 0) -> np.ndarray:
        """Matrix ``[phi_j^(deriv)(s_i)]`` of shape (len(s), v), clamping into the interval."""
        u = np.clip(self.interval.to_unit(s), 0.0, 1.0)
        spl = BSpline(self.knots, self.coef, self.degree, extrapolate=False)
        if deriv:
            spl = spl.derivative(deriv)
        return spl(u) / self.interval.width ** deriv

    def gram(self) -> tuple[np.ndarray, np.ndarray]:
        """V and J Gram matrices of the stored eigenfunctions (by quadrature)."""
        wq = self.quad_weights * self.weight
        v_mat = (self.phi * wq) @ self.phi.T
        dm = self.design(self.grid, deriv=self.m)
        j_mat = dm.T @ (dm * self.quad_weights[:, None])
        return v_mat, j_mat


def build_eigensystem(density: DensityEstimate, sigma0sq: ArrayLike = 1.0,
                      m: int = 3, num_basis: int = DEFAULT_NUM_BASIS,
                      num_eigen: int = 40, degree: int | None = None) -> EigenSystem:
    """Solve the pencil ``J_B c = rho V_B c`` for the ``num_eigen`` smallest rho.

    Off the polynomial null space the pencil is solved as an SVD of
    ``R C L^-T`` (``J_B = R'R``, ``C' V_B C = L L'``), so ``rho = sigma^2``
    keeps full relative accuracy even at the low end of the spectrum.

    Parameters
    ----------
    density : DensityEstimate
        Design density of the index on its interval.
    sigma0sq : float or array
        Working variance.  An array is read as values on ``density.grid``.
    m : int
        Penalty order (``J`` uses the m-th derivative).
    num_basis, num_eigen : int
        Size of the B-spline space and number of eigenpairs kept.
    """
    if m < 2:
        raise ValueError("penalty order m must be >= 2")
    if not m < num_eigen <= num_basis:
        raise ValueError("need m < num_eigen <= num_basis")
    degree = _default_degree(m) if degree is None else int(degree)
    if degree < m:
        raise ValueError("spline degree must be at least m")
    interval = density.interval
    knots, nodes, qw, design, r_ref, null_coef, d1 = _reference_space(m, num_basis, degree)
    width = interval.width
    s_nodes = interval.lo + width * nodes
    s_weights = width * qw
    sig = np.asarray(sigma0sq, dtype=float)
    sig_nodes = np.interp(s_nodes, density.grid, sig) if sig.ndim else np.full_like(s_nodes, sig)
    weight = sig_nodes * density(s_nodes)
    if not np.all(weight > 0):
        raise ValueError("weight sigma0sq * density must be strictly positive")

    v_b = design.T @ (design * (s_weights * weight)[:, None])
    v_b = 0.5 * (v_b + v_b.T)

    # polynomial null space of J, V-orthonormalized
    try:
        chol = sla.cholesky(null_coef.T @ v_b @ null_coef, lower=False)
    except sla.LinAlgError as exc:
        raise NumericalError("V Gram matrix is not positive definite") from exc
    p0 = sla.solve_triangular(chol, null_coef.T, trans="T").T
    comp = sla.null_space(p0.T @ v_b)
    k = num_eigen - m
    try:
        low = sla.cholesky(comp.T @ v_b @ comp, lower=True)
        fac = sla.solve_triangular(low, (r_ref @ comp).T, lower=True).T
        _, sv, vt = sla.svd(fac, full_matrices=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigensolver failed: {exc}") from exc
    vecs = sla.solve_triangular(low, vt[::-1][:k].T, lower=True, trans="T")
    coef = np.hstack([p0, comp @ vecs])
    rho = np.r_[np.zeros(m), sv[::-1][:k] ** 2 * width ** (1 - 2 * m)]
    # deterministic sign: largest-magnitude coefficient positive
    idx = np.argmax(np.abs(coef), axis=0)
    coef = coef * np.sign(coef[idx, np.arange(coef.shape[1])])

    phi = (design @ coef).T
    dphi = (d1 @ coef).T / width
    for arr in (coef, rho, s_nodes, s_weights, weight, phi, dphi):
        arr.setflags(write=False)
    return EigenSystem(interval, m, degree, knots, coef, rho, s_nodes, s_weights,
                       weight, phi, dphi)


def eval_basis(eig: EigenSystem, points) -> tuple[np.ndarray, np.ndarray]:
    """Eigenfunction values and first derivatives, each of shape (v, P)."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return np.empty((eig.num_eigen, 0)), np.empty((eig.num_eigen, 0))
    pts = eig.interval.check(pts)
    return eig.design(pts).T, eig.design(pts, deriv=1).T


@dataclass(frozen=True, eq=False)
class KernelHandle:
    eig: EigenSystem
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def kernel_eval(k: KernelHandle, s: float, t: float) -> float:
    """Truncated reproducing kernel ``sum_j phi_j(s) phi_j(t) / (1 + lam rho_j)``."""
    phi, _ = eval_basis(k.eig, [s, t])
    return float(np.sum(phi[:, 0] * phi[:, 1] / (1.0 + k.lam * k.eig.rho)))


def kernel_matrix(k: KernelHandle, points) -> np.ndarray:
    phi, _ = eval_basis(k.eig, points)
    return (phi.T / (1.0 + k.lam * k.eig.rho)) @ phi


def apply_m_lambda(a, lam: float, rho) -> np.ndarray:
    """Coefficients of ``M_lam g`` for ``g = sum_j a_j phi_j``."""
    a = np.asarray(a, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if a.shape != rho.shape:
        raise ValueError("coefficient and eigenvalue vectors differ in length")
    lr = lam * rho
    return lr * a / (1.0 + lr)


def dump_csv(eig: EigenSystem, path) -> None:
    """Debug dump: one row per grid node with all eigenfunction values, rho in the header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"phi{j + 1}" for j in range(eig.num_eigen)])
        w.writerow(["rho"] + [f"{r:.17g}" for r in eig.rho])
        for i, s in enumerate(eig.grid):
            w.writerow([f"{s:.17g}"] + [f"{x:.17g}" for x in eig.phi[:, i]])
