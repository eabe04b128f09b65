"""Discrete fractional Dirichlet form on a 1-D interval.

Piecewise-linear hat functions on a uniform grid, extended by zero outside
the interval. Because the Gagliardo double integral runs over all of
R x R (the exterior block contributes nothing for zero-extended fields), the
form is translation invariant on the lattice and the stiffness matrix is
Toeplitz:

    K_ij = h^(1-2s) * k(|i-j|),
    k(m) = 2 * int_0^inf [2 B(m) - B(m+z) - B(m-z)] z^(-1-2s) dz,

where B is the autocorrelation of the unit hat, i.e. the centred cubic
B-spline. The interval z in [0, 1] carries the singular part and is
integrated exactly (the integrand is a cubic vanishing to second order at
z = 0); the remaining pieces are smooth and handled by adaptive quadrature;
the tail beyond the spline support is a closed-form power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, linalg

__all__ = [
    "DomainGrid",
    "StiffnessForm",
    "EigenPair",
    "EmbeddingConstants",
    "build_grid",
    "assemble_stiffness",
    "principal_eigenpair",
    "estimate_constants",
    "cubic_bspline",
    "toeplitz_symbol",
]


class ConvergenceError(RuntimeError):
    """An iterative procedure did not reach its tolerance."""


@dataclass(frozen=True)
class DomainGrid:
    """Uniform interior mesh of (x_lo, x_hi) with nodal quadrature weights."""

    x_lo: float
    x_hi: float
    N: int
    nodes: np.ndarray = field(repr=False)
    h: float
    quad_weights: np.ndarray = field(repr=False)

    @property
    def length(self) -> float:
        """Lebesgue measure of the interval."""
        return self.x_hi - self.x_lo

    @property
    def measure(self) -> float:
        """Discrete measure sum(w_i); equals length - h under hat lumping."""
        return float(self.quad_weights.sum())

    @property
    def center(self) -> float:
        return 0.5 * (self.x_lo + self.x_hi)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.quad_weights @ values)


def build_grid(x_lo: float, x_hi: float, N: int) -> DomainGrid:
    """Uniform grid with N interior nodes and weight h at each node.

    Hat lumping integrates every piecewise-linear field with zero boundary
    values exactly, so the weights sum to |x_hi - x_lo| - h rather than the
    full length.
    """
    if not (math.isfinite(x_lo) and math.isfinite(x_hi)) or not x_lo < x_hi:
        raise ValueError(f"degenerate interval ({x_lo}, {x_hi})")
    N = int(N)
    if N < 3:
        raise ValueError(f"need at least 3 interior nodes, got {N}")
    h = (x_hi - x_lo) / (N + 1)
    nodes = x_lo + h * np.arange(1, N + 1)
    weights = np.full(N, h)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return DomainGrid(float(x_lo), float(x_hi), N, nodes, h, weights)


def cubic_bspline(x):
    """Centred cubic B-spline on [-2, 2] (autocorrelation of the unit hat)."""
    ax = np.abs(np.asarray(x, dtype=float))
    inner = 2.0 / 3.0 - ax**2 + 0.5 * ax**3
    outer = (2.0 - ax) ** 3 / 6.0
    return np.where(ax <= 1.0, inner, np.where(ax <= 2.0, outer, 0.0))


def _shift_difference(m: int):
    b_m = float(cubic_bspline(m))

    def w(z):
        return 2.0 * b_m - cubic_bspline(m + z) - cubic_bspline(m - z)

    return w


def _symbol_entry(m: int, s: float, tol: float) -> float:
    w = _shift_difference(m)
    total = 0.0
    # singular cell: w is a single cubic on [0, 1] with w(0) = w'(0) = 0
    taus = np.linspace(0.0, 1.0, 9)
    coef = npoly.polyfit(taus, w(taus), 3)
    total += coef[2] / (2.0 - 2.0 * s) + coef[3] / (3.0 - 2.0 * s)
    # smooth cells up to the end of the spline support
    for j in range(1, m + 2):
        val, err = integrate.quad(
            lambda z: float(w(z)) * z ** (-1.0 - 2.0 * s),
            j, j + 1, epsabs=0.1 * tol, epsrel=1e-13, limit=200,
        )
        if err > tol:
            raise ConvergenceError(f"stiffness entry m={m}: quadrature error {err:.2e}")
        total += val
    # beyond z = m + 2 the integrand is 2 B(m) z^(-1-2s)
    z_end = float(max(m + 2, 1))
    b_m = float(cubic_bspline(m))
    if b_m != 0.0:
        total += 2.0 * b_m * z_end ** (-2.0 * s) / (2.0 * s)
    return 2.0 * total


def toeplitz_symbol(N: int, s: float, tol: float = 1e-10) -> np.ndarray:
    """First row k(0..N-1) of the unit-spacing stiffness matrix."""
    return np.array([_symbol_entry(m, s, tol) for m in range(N)])


@dataclass(frozen=True)
class StiffnessForm:
    """Symmetric positive definite matrix of the Gagliardo form ||u||^2."""

    s: float
    entries: np.ndarray = field(repr=False)
    grid: DomainGrid = field(repr=False)
    _chol: tuple = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self._chol is None:
            object.__setattr__(self, "_chol", linalg.cho_factor(self.entries))

    @property
    def two_star(self) -> float:
        return 2.0 / (1.0 - 2.0 * self.s)

    def form(self, u: np.ndarray, v: Optional[np.ndarray] = None) -> float:
        """Bilinear form u^T K v (quadratic form if v is omitted)."""
        v = u if v is None else v
        return float(u @ (self.entries @ v))

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.entries @ u

    def solve(self, r: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self._chol, r)

    def dual_norm(self, r: np.ndarray) -> float:
        """sqrt(r^T K^-1 r)."""
        return math.sqrt(max(float(r @ self.solve(r)), 0.0))


def assemble_stiffness(grid: DomainGrid, s: float, tol: float = 1e-10) -> StiffnessForm:
    """Assemble the fractional stiffness matrix for order s in (0, 1/2)."""
    if not 0.0 < s < 0.5:
        raise ValueError(f"fractional order must lie in (0, 1/2) for n = 1, got {s}")
    symbol = toeplitz_symbol(grid.N, s, tol)
    K = grid.h ** (1.0 - 2.0 * s) * linalg.toeplitz(symbol)
    K.setflags(write=False)
    chol = linalg.cho_factor(K)
    return StiffnessForm(float(s), K, grid, chol)


@dataclass(frozen=True)
class EigenPair:
    lambda1: float
    phi1: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0


def principal_eigenpair(K: StiffnessForm, tol: float = 1e-10, max_iters: int = 2000) -> EigenPair:
    """Smallest eigenpair of K phi = lambda M phi by inverse iteration.

    M is the lumped (diagonal) quadrature form. The eigenvector is scaled to
    unit maximum and made positive.
    """
    w = K.grid.quad_weights
    phi = np.ones(K.grid.N)
    lam = K.form(phi) / float(phi @ (w * phi))
    for it in range(1, max_iters + 1):
        phi = K.solve(w * phi)
        phi /= np.abs(phi).max()
        Kphi = K.apply(phi)
        lam_new = float(phi @ Kphi) / float(phi @ (w * phi))
        res = np.linalg.norm(Kphi - lam_new * w * phi)
        if res <= tol * np.linalg.norm(Kphi) and abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_iters} steps")
    if phi.sum() < 0:
        phi = -phi
    phi = phi / phi.max()
    phi.setflags(write=False)
    return EigenPair(lam, phi, it, float(res / np.linalg.norm(Kphi)))


@dataclass(frozen=True)
class EmbeddingConstants:
    """Discrete best Sobolev constant and the sup constants C_alpha.

    ``C`` maps exponent -> value; ``starts`` records how many descent starts
    were used for each exponent and ``maximizers`` keeps the best field.
    """

    S_d: float
    C: Dict[float, float]
    starts: Dict[float, int]
    two_star: float
    maximizers: Dict[float, np.ndarray] = field(repr=False, default_factory=dict)

    def __getitem__(self, alpha: float) -> float:
        return self.C[_key(alpha)]


def _key(alpha: float) -> float:
    return round(float(alpha), 12)


def _power_sum(w, u, alpha):
    return float(w @ np.abs(u) ** alpha)


def _maximize_power(K: StiffnessForm, alpha: float, u0: np.ndarray, max_iters: int, tol: float):
    """Maximise sum w|u|^alpha on the unit sphere of the K-norm.

    Normalized projected ascent: step along the Riesz representative
    K^-1 grad F, then rescale back to the sphere. The full step (the
    normalised Riesz vector itself) is tried first; for convex F it always
    ascends. Otherwise the step is halved until F increases.
    """
    w = K.grid.quad_weights
    u = np.abs(u0) + 1e-300
    u = u / math.sqrt(K.form(u))
    f = _power_sum(w, u, alpha)
    for it in range(1, max_iters + 1):
        g = alpha * w * np.abs(u) ** (alpha - 1.0)
        d = K.solve(g)
        d_norm = math.sqrt(K.form(d))
        if not np.isfinite(d_norm) or d_norm == 0.0:
            raise ConvergenceError("descent direction degenerated")
        v = d / d_norm
        fv = _power_sum(w, v, alpha)
        tau = 1.0 / d_norm
        while fv <= f and tau > 1e-16:
            v = u + tau * d
            v = v / math.sqrt(K.form(v))
            fv = _power_sum(w, v, alpha)
            tau *= 0.5
        if fv <= f:
            break
        done = fv - f <= tol * fv
        u, f = v, fv
        if done:
            break
    return f, np.abs(u), it


def estimate_constants(
    K: StiffnessForm,
    alphas: Iterable[float],
    starts: int = 5,
    seed: Optional[int] = 0,
    max_iters: int = 5000,
    tol: float = 1e-14,
) -> EmbeddingConstants:
    """Estimate S_d and C_alpha by multistart normalized projected ascent.

    The critical exponent 2*_s is always included because S_d is read off
    its extremal: S_d = C_{2*}^(-2/2*). alpha = 0 returns the discrete
    measure of the interval.
    """
    if starts < 1:
        raise ValueError("need at least one start")
    p = K.two_star
    grid = K.grid
    rng = np.random.default_rng(seed)
    wanted = sorted({_key(a) for a in alphas} | {_key(p)})
    C: Dict[float, float] = {}
    used: Dict[float, int] = {}
    best_u: Dict[float, np.ndarray] = {}
    for alpha in wanted:
        if alpha < 0 or alpha > p + 1e-12:
            raise ValueError(f"exponent {alpha} outside [0, {p}]")
        if alpha == 0.0:
            C[alpha] = grid.measure
            used[alpha] = 0
            continue
        # one deterministic off-centre hat breaks the mirror symmetry, the
        # rest are random positive fields
        hat = np.zeros(grid.N)
        hat[grid.N // 2] = 1.0
        candidates = [hat] + [rng.random(grid.N) for _ in range(starts - 1)]
        best = -np.inf
        for u0 in candidates:
            f, u, _ = _maximize_power(K, alpha, u0, max_iters, tol)
            if not np.isfinite(f):
                raise ConvergenceError(f"ascent diverged for alpha={alpha}")
            if f > best:
                best, best_u[alpha] = f, u
        C[alpha] = best
        used[alpha] = len(candidates)
    S_d = C[_key(p)] ** (-2.0 / p)
    return EmbeddingConstants(S_d, C, used, p, best_u)
