"""Branch minimizers on the two Nehari components.

The descent is a projected Sobolev-gradient scheme. Each trial step moves
along -K^-1 r (the gradient in the K inner product), clips to the
subsolution barrier, and rescales back onto the requested Nehari component.
Armijo backtracking on the energy of the projected point decides
acceptance. On the manifold the derivative of u -> I(P(u)) equals the
gradient of I, so the Armijo model is the usual one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize

from .energy import (ProblemParams, SingularFieldError, concave_integral,
                     critical_integral, energy, weak_residual)
from .fibering import Branch, FiberReport, NoRootsError, fiber_roots, nehari_project
from .operator import EigenPair, StiffnessForm

log = logging.getLogger(__name__)

__all__ = [
    "BarrierConfig",
    "BranchSolution",
    "BranchFailure",
    "SeedError",
    "barrier_height",
    "barrier_conditions",
    "minimize_branch",
    "minimize_Nplus",
    "minimize_Nminus",
    "lowest_Nminus",
    "mountain_pass_seed",
    "sigma_values",
    "lambda_upper_bound",
    "bracket_failure_lambda",
    "t_epsilon_continuity",
]

FLOOR = 1e-12


class BranchFailure(RuntimeError):
    """A branch descent lost its Nehari scaling or stagnated."""


class SeedError(RuntimeError):
    """The bubble path did not cross into N-."""


@dataclass(frozen=True)
class BarrierConfig:
    """Subsolution barrier eta * phi1; ``active`` is False when no eta was admissible."""

    eta: float
    phi: np.ndarray = field(repr=False)
    active: bool = True
    floor: float = FLOOR

    def lower(self) -> np.ndarray:
        if self.active:
            return self.phi
        return np.full_like(self.phi, self.floor)

    def margin(self, u: np.ndarray) -> float:
        return float(np.min(u - self.lower()))


def barrier_conditions(eta: float, P: ProblemParams, eig: EigenPair):
    """Nodewise truth of the monotonicity window and the subsolution inequality."""
    p, q = P.two_star, P.q
    phi = eta * np.asarray(eig.phi1)
    window = phi ** (p - 1.0 + q) <= P.lam * P.a * q / (p - 1.0)
    sub = eig.lambda1 * phi <= P.lam * P.a * phi ** (-q) + phi ** (p - 1.0)
    return window, sub


def barrier_height(P: ProblemParams, eig: EigenPair, k_max: int = 60) -> BarrierConfig:
    """Largest eta = 2^-k satisfying both barrier conditions at every node."""
    for k in range(k_max + 1):
        eta = 2.0**-k
        window, sub = barrier_conditions(eta, P, eig)
        if window.all() and sub.all():
            return BarrierConfig(eta, eta * np.asarray(eig.phi1))
    log.warning("no admissible barrier height down to 2^-%d; using positivity floor", k_max)
    return BarrierConfig(0.0, np.zeros_like(eig.phi1), active=False)


@dataclass
class BranchSolution:
    u: np.ndarray = field(repr=False)
    branch: Branch
    energy: float
    residual_dual: float
    fiber: FiberReport
    barrier_margin: float
    iterations: int
    converged: bool
    energy_history: List[float] = field(default_factory=list, repr=False)
    margin_history: List[float] = field(default_factory=list, repr=False)
    residual_history: List[float] = field(default_factory=list, repr=False)


def minimize_branch(
    P: ProblemParams,
    K: StiffnessForm,
    barrier: BarrierConfig,
    init: np.ndarray,
    branch: Branch,
    tol: float = 1e-6,
    max_iters: int = 5000,
    shrink: float = 0.5,
    slope: float = 1e-4,
) -> BranchSolution:
    """Minimise the energy over one Nehari component, starting from init."""
    branch = Branch(branch)
    lower = barrier.lower()
    try:
        u = nehari_project(np.maximum(init, lower), P, K, branch)
    except NoRootsError as exc:
        raise BranchFailure(f"initial field has no {branch.value} scaling: {exc}") from exc
    E = energy(u, P, K)
    energies, margins, residuals = [E], [barrier.margin(u)], []
    tau = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        r = weak_residual(u, P, K)
        d = -K.solve(r)
        dec = float(r @ d)  # = -||r||^2 in the dual norm
        res = math.sqrt(max(-dec, 0.0))
        residuals.append(res)
        if res <= tol:
            converged = True
            break
        tau = min(2.0 * tau, 1e6)
        while True:
            trial = np.maximum(u + tau * d, lower)
            try:
                v = nehari_project(trial, P, K, branch)
                Ev = energy(v, P, K)
                ok = Ev <= E + slope * tau * dec and barrier.margin(v) >= 0.0
            except (NoRootsError, SingularFieldError):
                ok = False
            if ok:
                break
            tau *= shrink
            if tau < 1e-14:
                raise BranchFailure(
                    f"{branch.value} line search stagnated at residual {res:.3e} "
                    f"after {it} iterations"
                )
        u, E = v, Ev
        energies.append(E)
        margins.append(barrier.margin(u))
    else:
        res = K.dual_norm(weak_residual(u, P, K))
        residuals.append(res)
    return BranchSolution(
        u=u,
        branch=branch,
        energy=E,
        residual_dual=residuals[-1],
        fiber=fiber_roots(u, P, K),
        barrier_margin=barrier.margin(u),
        iterations=it,
        converged=converged,
        energy_history=energies,
        margin_history=margins,
        residual_history=residuals,
    )


def minimize_Nplus(P, K, barrier, init=None, eig: Optional[EigenPair] = None, **kw) -> BranchSolution:
    """Minimiser of the energy on N+; the default start is phi1 rescaled onto N+."""
    if init is None:
        if eig is None:
            raise ValueError("need an initial field or the principal eigenpair")
        init = np.asarray(eig.phi1, dtype=float)
    return minimize_branch(P, K, barrier, init, Branch.NPLUS, **kw)


def sigma_values(t: float, u: np.ndarray, bubble: np.ndarray, P: ProblemParams, K: StiffnessForm):
    """phi'(1) and phi''(1) of the field u + t * bubble."""
    w = u + t * bubble
    n2 = K.form(w)
    A = concave_integral(w, P, K)
    B = critical_integral(w, P, K)
    p, q = P.two_star, P.q
    return n2 - P.lam * A - B, n2 + q * P.lam * A - (p - 1.0) * B


def mountain_pass_seed(u_plus: np.ndarray, bubble: np.ndarray, P: ProblemParams,
                       K: StiffnessForm, scan: int = 400):
    """Shift t' with u_plus + t' * bubble in N-.

    t0 is the last zero of the second-derivative curve along the path; the
    first-derivative curve must still be positive there and is then driven
    to zero beyond t0. Returns (t', t0).
    """
    s2_0 = sigma_values(0.0, u_plus, bubble, P, K)[1]
    if s2_0 <= 0:
        raise SeedError("start of the path is not in N+")
    T = 1.0
    while sigma_values(T, u_plus, bubble, P, K)[1] >= 0:
        T *= 2.0
        if T > 1e12:
            raise SeedError("second-derivative curve never turns negative")
    ts = np.linspace(0.0, T, scan + 1)
    s2 = np.array([sigma_values(t, u_plus, bubble, P, K)[1] for t in ts])
    last = int(np.nonzero(s2 >= 0)[0].max())
    t0 = optimize.brentq(lambda t: sigma_values(t, u_plus, bubble, P, K)[1],
                         ts[last], ts[last + 1], xtol=1e-14, rtol=1e-14)
    s1_t0 = sigma_values(t0, u_plus, bubble, P, K)[0]
    if s1_t0 <= 0:
        raise SeedError(f"first-derivative curve is {s1_t0:.3e} <= 0 at t0={t0:.6g}")
    hi = 2.0 * t0 if t0 > 0 else 1.0
    while sigma_values(hi, u_plus, bubble, P, K)[0] >= 0:
        hi *= 2.0
        if hi > 1e12:
            raise SeedError("first-derivative curve never turns negative")
    t_prime = optimize.brentq(lambda t: sigma_values(t, u_plus, bubble, P, K)[0],
                              t0, hi, xtol=1e-15, rtol=1e-15)
    return t_prime, t0


def minimize_Nminus(P, K, barrier, u_plus: BranchSolution, bubble: np.ndarray, **kw) -> BranchSolution:
    """Minimiser of the energy on N-, started on the bubble path through u_plus."""
    t_prime, _ = mountain_pass_seed(u_plus.u, bubble, P, K)
    init = u_plus.u + t_prime * bubble
    return minimize_branch(P, K, barrier, init, Branch.NMINUS, **kw)


def lambda_upper_bound(P: ProblemParams, eig: EigenPair, eps_rel: float = 1e-3,
                       slope: Optional[float] = None) -> float:
    """Upper bound on lambda beyond which no positive solution exists.

    mu* is the smallest mu with mu t^-q + t^(p-1) > c t for all t > 0, where
    c = lambda1 (1 + eps_rel) unless ``slope`` overrides it. The condition
    is mu > max_t (c t^(1+q) - t^(p-1+q)) whose maximiser is explicit. Testing
    the equation against phi1 and using a >= theta turns this into
    lambda < mu*/theta.
    """
    p, q = P.two_star, P.q
    c = eig.lambda1 * (1.0 + eps_rel) if slope is None else float(slope)
    t_star = (c * (1.0 + q) / (p - 1.0 + q)) ** (1.0 / (p - 2.0))
    mu = c * t_star ** (1.0 + q) * (p - 2.0) / (p - 1.0 + q)
    # smallest representable value above the supremum keeps the inequality strict
    mu = mu * (1.0 + 1e-12)
    return mu / P.theta


@dataclass
class FailureBracket:
    lam_fail: float
    lam_ok: float
    lo_succeeded: bool
    hi_failed: bool
    evaluations: int


def _nplus_succeeds(lam: float, P: ProblemParams, K: StiffnessForm, eig: EigenPair,
                    max_iters: int) -> bool:
    Pl = P.with_lambda(lam)
    barrier = barrier_height(Pl, eig)
    try:
        sol = minimize_Nplus(Pl, K, barrier, eig=eig, max_iters=max_iters)
    except BranchFailure:
        return False
    return sol.converged and sol.fiber.n_roots == 2


def bracket_failure_lambda(P: ProblemParams, K: StiffnessForm, eig: EigenPair,
                           lo: float, hi: float, rel_tol: float = 1e-2,
                           max_iters: int = 600) -> FailureBracket:
    """Bisect for the lambda where the N+ descent stops converging.

    lo should succeed and hi fail; the returned lam_fail is the smallest
    failing value found and lam_ok the largest succeeding one.
    """
    lo_ok = _nplus_succeeds(lo, P, K, eig, max_iters)
    hi_fail = not _nplus_succeeds(hi, P, K, eig, max_iters)
    evals = 2
    a, b = lo, hi
    if lo_ok and hi_fail:
        while b - a > rel_tol * b:
            mid = 0.5 * (a + b)
            evals += 1
            if _nplus_succeeds(mid, P, K, eig, max_iters):
                a = mid
            else:
                b = mid
    return FailureBracket(b, a, lo_ok, hi_fail, evals)


@dataclass
class TEpsilonReport:
    eps: List[float]
    t_eps: List[float]
    deviation: List[float]
    slope: float
    monotone: bool
    truncated: bool


def t_epsilon_continuity(v: BranchSolution, w: np.ndarray, eps_list: Sequence[float],
                         P: ProblemParams, K: StiffnessForm) -> TEpsilonReport:
    """N- rescaling factors t_eps of v + eps * w.

    |t_eps - 1| is reported against eps; ``slope`` is max |t_eps - 1| / eps
    and ``monotone`` says whether the deviation shrinks as eps decreases.
    """
    if v.fiber.classification_at_1 is not Branch.NMINUS:
        raise ValueError("v must lie on N-")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("perturbation direction must be nonnegative")
    eps_out, ts = [], []
    truncated = False
    for eps in eps_list:
        if eps == 0.0 or not np.any(w):
            # the perturbed field is v itself, already on N-
            t = 1.0
        else:
            rep = fiber_roots(v.u + eps * w, P, K)
            if rep.n_roots < 2:
                truncated = True
                break
            t = rep.roots[1]
        eps_out.append(float(eps))
        ts.append(float(t))
    dev = [abs(t - 1.0) for t in ts]
    pairs = sorted(zip(eps_out, dev), reverse=True)
    monotone = all(d2 < d1 for (_, d1), (_, d2) in zip(pairs, pairs[1:]) if d1 > 0)
    ratios = [d / e for e, d in zip(eps_out, dev) if e > 0]
    return TEpsilonReport(eps_out, ts, dev, max(ratios) if ratios else 0.0, monotone, truncated)


def lowest_Nminus(P, K, barrier, u_plus: BranchSolution, bubbles: Sequence[np.ndarray],
                  **kw) -> BranchSolution:
    """Run the N- descent from each bubble seed and keep the lowest converged energy.

    The N- component is not convex and the descent only certifies
    stationarity, so several seeds approximate its infimum better than one.
    Seeds whose path never crosses into N- are skipped.
    """
    best: Optional[BranchSolution] = None
    errors = []
    for phi in bubbles:
        try:
            sol = minimize_Nminus(P, K, barrier, u_plus, phi, **kw)
        except (SeedError, BranchFailure) as exc:
            errors.append(str(exc))
            continue
        if not sol.converged:
            continue
        if best is None or sol.energy < best.energy:
            best = sol
    if best is None:
        raise BranchFailure("no N- seed converged: " + "; ".join(errors))
    return best
