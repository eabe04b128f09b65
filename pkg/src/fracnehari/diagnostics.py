"""Moser-iteration ladder and related solution probes.

The ladder follows the exponents beta_1 = p/2, beta_{m+1} - 1 = (p/2)(beta_m - 1)
and the quantities

    D_{m+1} = (1 + int u^(p beta_m))^(1 / (p (beta_m - 1))).

Power sums are taken in the log domain so exponents of several hundred do
not overflow. Because of the additive 1, D_m tends to max(1, ||u||_inf);
the plain power means (int u^e)^(1/e) are recorded alongside and tend to
||u||_inf itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import logsumexp

from .energy import ProblemParams, _weights

__all__ = ["MoserLadder", "truncation_phi", "truncation_phi_prime", "moser_ladder",
           "beta_closed_form"]


def truncation_phi(t: float, T: float, beta: float) -> float:
    """Convex Lipschitz truncation of t^beta: 0, t^beta, then the tangent line past T."""
    if not T > 0 or beta < 1:
        raise ValueError("need T > 0 and beta >= 1")
    if t <= 0:
        return 0.0
    if t < T:
        return t**beta
    return beta * T ** (beta - 1.0) * (t - T) + T**beta


def truncation_phi_prime(t: float, T: float, beta: float) -> float:
    if not T > 0 or beta < 1:
        raise ValueError("need T > 0 and beta >= 1")
    if t <= 0:
        return 0.0
    return beta * min(t, T) ** (beta - 1.0)


def beta_closed_form(m: int, p: float) -> float:
    """beta_m = 1 + (p/2)^(m-1) (beta_1 - 1) with beta_1 = p/2."""
    return 1.0 + (0.5 * p) ** (m - 1) * (0.5 * p - 1.0)


@dataclass
class MoserLadder:
    beta_seq: List[float]
    exponents: List[float]
    lp_norms: List[float]
    power_means: List[float]
    sup_norm: float
    truncated: bool = False
    log_power_sums: List[float] = field(default_factory=list, repr=False)

    @property
    def limit(self) -> float:
        """Analytic limit of the D-sequence."""
        return max(1.0, self.sup_norm)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lp_norms)))

    @property
    def relative_error(self) -> float:
        """|D_last - ||u||_inf| / ||u||_inf."""
        return abs(self.lp_norms[-1] - self.sup_norm) / self.sup_norm

    def tail_band(self, frac: float = 0.01) -> int:
        """First index from which the D-sequence is monotone and within frac of its last value.

        Returns len(lp_norms) if no such tail exists.
        """
        D = np.asarray(self.lp_norms)
        last = D[-1]
        start = len(D) - 1
        while start > 0:
            prev, cur = D[start - 1], D[start]
            same_dir = start == len(D) - 1 or np.sign(cur - prev) == np.sign(D[start + 1] - cur) \
                or cur == prev
            if abs(prev - last) <= frac * abs(last) and same_dir:
                start -= 1
            else:
                break
        return start


def moser_ladder(u: np.ndarray, P: ProblemParams, where, depth: int = 8) -> MoserLadder:
    """Evaluate D_2 ... D_{depth+1} for a positive nodal field.

    ``where`` supplies the quadrature weights (grid, stiffness form or the
    weight vector). The ladder is cut short if a power sum stops being
    finite even in the log domain.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("ladder needs a strictly positive field")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    w = _weights(where)
    p = P.two_star
    log_u = np.log(u)
    log_w = np.log(w)
    betas, exps, D, means, logs = [], [], [], [], []
    truncated = False
    beta = 0.5 * p
    for _ in range(depth):
        e = p * beta
        L = float(logsumexp(e * log_u + log_w))
        d = math.exp(np.logaddexp(0.0, L) / (p * (beta - 1.0)))
        if not (math.isfinite(L) and math.isfinite(d)):
            truncated = True
            break
        betas.append(beta)
        exps.append(e)
        logs.append(L)
        D.append(d)
        means.append(math.exp(L / e))
        beta = 1.0 + 0.5 * p * (beta - 1.0)
    return MoserLadder(betas, exps, D, means, float(u.max()), truncated, logs)
