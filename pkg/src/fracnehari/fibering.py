"""Fibering maps t -> I(t u) and the Nehari decomposition.

Along a ray every quantity depends on u only through three numbers:
norm_sq = u^T K u, the concave integral A(u) and the critical integral
B(u). The derivative factors as

    phi_u'(t) = t^-q (m_u(t) - lam A(u)),
    m_u(t)    = t^(1+q) norm_sq - t^(p-1+q) B(u),

and m_u is unimodal with an explicit peak, so the Nehari scalings are the
two solutions of m_u(t) = lam A(u) on either side of the peak.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .energy import ProblemParams, concave_integral, critical_integral, g_q
from .operator import EmbeddingConstants, StiffnessForm

__all__ = [
    "Branch",
    "FiberReport",
    "NoRootsError",
    "BracketError",
    "fiber_scalars",
    "fiber_value",
    "fiber_d1",
    "fiber_d2",
    "t_max",
    "m_u",
    "m_at_tmax",
    "ray_threshold",
    "lambda_star",
    "fiber_roots",
    "nehari_project",
    "hybrid_root",
]

ON_MANIFOLD_TOL = 1e-9
ROOT_TOL = 1e-10


class Branch(str, enum.Enum):
    NPLUS = "Nplus"
    NMINUS = "Nminus"
    NZERO = "Nzero"
    OFF = "offManifold"


class NoRootsError(ValueError):
    """The fibering map of this ray has no critical point at this lambda."""


class BracketError(RuntimeError):
    """Monotone bracket expansion failed."""


@dataclass(frozen=True)
class FiberScalars:
    norm_sq: float
    concave: float
    critical: float
    log_mass: float = 0.0  # sum w a ln u, only used for q = 1


def fiber_scalars(u: np.ndarray, P: ProblemParams, K: StiffnessForm) -> FiberScalars:
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or not np.any(u > 0):
        raise ValueError("ray direction must be nonnegative and nonzero")
    log_mass = 0.0
    if P.q == 1.0:
        with np.errstate(divide="ignore"):
            log_mass = float(K.grid.quad_weights @ (P.a * g_q(u, 1.0)))
    return FiberScalars(K.form(u), concave_integral(u, P, K), critical_integral(u, P, K), log_mass)


def _value(fs: FiberScalars, t: float, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    if q == 1.0:
        sing = fs.log_mass + fs.concave * math.log(t)
    else:
        sing = t ** (1.0 - q) * fs.concave / (1.0 - q)
    return 0.5 * t * t * fs.norm_sq - P.lam * sing - t**p * fs.critical / p


def _d1(fs: FiberScalars, t: float, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    return t * fs.norm_sq - P.lam * t ** (-q) * fs.concave - t ** (p - 1.0) * fs.critical


def _d2(fs: FiberScalars, t: float, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    return (fs.norm_sq + q * P.lam * t ** (-q - 1.0) * fs.concave
            - (p - 1.0) * t ** (p - 2.0) * fs.critical)


def _check_t(t: float) -> None:
    if not t > 0:
        raise ValueError(f"fiber parameter must be positive, got {t}")


def fiber_value(u, t: float, P: ProblemParams, K: StiffnessForm) -> float:
    """I(t u) evaluated from the ray scalars."""
    _check_t(t)
    return _value(fiber_scalars(u, P, K), t, P)


def fiber_d1(u, t: float, P: ProblemParams, K: StiffnessForm) -> float:
    _check_t(t)
    return _d1(fiber_scalars(u, P, K), t, P)


def fiber_d2(u, t: float, P: ProblemParams, K: StiffnessForm) -> float:
    _check_t(t)
    return _d2(fiber_scalars(u, P, K), t, P)


def _tmax(fs: FiberScalars, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    if fs.critical <= 0:
        raise ValueError("critical integral vanishes: no finite peak")
    return ((1.0 + q) * fs.norm_sq / ((p - 1.0 + q) * fs.critical)) ** (1.0 / (p - 2.0))


def _m(fs: FiberScalars, t: float, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    return t ** (1.0 + q) * fs.norm_sq - t ** (p - 1.0 + q) * fs.critical


def _dm(fs: FiberScalars, t: float, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    return (1.0 + q) * t**q * fs.norm_sq - (p - 1.0 + q) * t ** (p - 2.0 + q) * fs.critical


def _m_peak(fs: FiberScalars, P: ProblemParams) -> float:
    p, q = P.two_star, P.q
    e = p - 2.0
    return ((e / (p - 1.0 + q)) * ((1.0 + q) / (p - 1.0 + q)) ** ((1.0 + q) / e)
            * fs.norm_sq ** ((p - 1.0 + q) / e) / fs.critical ** ((1.0 + q) / e))


def t_max(u, P: ProblemParams, K: StiffnessForm) -> float:
    """Peak location of m_u."""
    return _tmax(fiber_scalars(u, P, K), P)


def m_u(u, t: float, P: ProblemParams, K: StiffnessForm) -> float:
    return _m(fiber_scalars(u, P, K), t, P)


def m_at_tmax(u, P: ProblemParams, K: StiffnessForm) -> float:
    """Peak value of m_u from its closed form."""
    return _m_peak(fiber_scalars(u, P, K), P)


def ray_threshold(u, P: ProblemParams, K: StiffnessForm) -> float:
    """The lambda at which this ray's two Nehari scalings merge.

    Scale invariant; lambda_star is a uniform lower bound for it.
    """
    fs = fiber_scalars(u, P, K)
    return _m_peak(fs, P) / fs.concave


def lambda_star(P: ProblemParams, consts: EmbeddingConstants) -> float:
    """Explicit lambda below which every ray has exactly two Nehari scalings.

    For q = 1 the sup constant C_0 (the measure) replaces C_{1-q}.
    """
    p, q = P.two_star, P.q
    e = p - 2.0
    c_crit = consts[p]
    c_conc = consts[1.0 - q]
    return ((e / (p - 1.0 + q)) * ((1.0 + q) / (p - 1.0 + q)) ** ((1.0 + q) / e)
            * c_crit ** ((-1.0 - q) / e) / (P.a_sup * c_conc))


def hybrid_root(
    f: Callable[[float], float],
    df: Callable[[float], float],
    lo: float,
    hi: float,
    ftol: float,
    bisect_rtol: float = 1e-6,
    newton_rtol: float = 1e-12,
    max_newton: int = 60,
) -> float:
    """Root of f in a sign-changing bracket [lo, hi].

    Bisection until the bracket is narrower than bisect_rtol * hi, then
    Newton from the midpoint, falling back to bisection whenever a step
    leaves the bracket.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > bisect_rtol * abs(hi):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(max_newton):
        ft = f(t)
        if (ft < 0) == (flo < 0):
            lo, flo = t, ft
        else:
            hi = t
        d = df(t)
        step = ft / d if d != 0 else math.inf
        t_new = t - step
        if not lo <= t_new <= hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= newton_rtol * abs(t) and abs(f(t_new)) <= ftol:
            return t_new
        t = t_new
    if abs(f(t)) <= ftol:
        return t
    raise BracketError("Newton polish did not reach the residual tolerance")


@dataclass(frozen=True)
class FiberReport:
    norm_sq: float
    concave: float
    critical: float
    t_max: float
    m_at_tmax: float
    roots: Tuple[float, ...]
    classification_at_1: Branch

    @property
    def n_roots(self) -> int:
        return len(self.roots)


def _classify(fs: FiberScalars, P: ProblemParams, tol: float = ON_MANIFOLD_TOL) -> Branch:
    scale = max(1.0, fs.norm_sq)
    if abs(_d1(fs, 1.0, P)) > tol * scale:
        return Branch.OFF
    d2 = _d2(fs, 1.0, P)
    if abs(d2) <= 1e-12 * scale:
        return Branch.NZERO
    return Branch.NPLUS if d2 > 0 else Branch.NMINUS


def _roots(fs: FiberScalars, P: ProblemParams, tm: float, peak: float) -> Tuple[float, ...]:
    target = P.lam * fs.concave
    ftol = ROOT_TOL * max(1.0, target)
    gap = peak - target
    if abs(gap) <= ftol:
        return (tm,)
    if gap < 0:
        return ()

    def f(t):
        return _m(fs, t, P) - target

    def df(t):
        return _dm(fs, t, P)

    lo = tm
    for _ in range(2000):
        lo *= 0.5
        if f(lo) < 0:
            break
    else:
        raise BracketError("could not bracket the lower scaling")
    hi = tm
    for _ in range(2000):
        hi *= 2.0
        if f(hi) < 0:
            break
    else:
        raise BracketError("could not bracket the upper scaling")
    t1 = hybrid_root(f, df, lo, tm, ftol)
    t2 = hybrid_root(f, df, tm, hi, ftol)
    return (t1, t2)


def fiber_roots(u, P: ProblemParams, K: StiffnessForm) -> FiberReport:
    """Critical points of the fibering map of u and the branch of u itself."""
    fs = fiber_scalars(u, P, K)
    tm = _tmax(fs, P)
    peak = _m_peak(fs, P)
    roots = _roots(fs, P, tm, peak)
    return FiberReport(fs.norm_sq, fs.concave, fs.critical, tm, peak, roots, _classify(fs, P))


def nehari_project(u, P: ProblemParams, K: StiffnessForm, branch: Branch) -> np.ndarray:
    """Rescale u onto N+ (smaller scaling) or N- (larger scaling)."""
    branch = Branch(branch)
    if branch not in (Branch.NPLUS, Branch.NMINUS):
        raise ValueError(f"can only project onto Nplus or Nminus, not {branch.value}")
    rep = fiber_roots(u, P, K)
    if rep.n_roots < 2:
        raise NoRootsError(
            f"ray has {rep.n_roots} Nehari scalings at lambda={P.lam:.6g}"
        )
    t = rep.roots[0] if branch is Branch.NPLUS else rep.roots[1]
    return t * np.asarray(u, dtype=float)
