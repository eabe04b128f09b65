"""Energy functional, its singular primitive and the weak residual.

Every integral over the interval uses the lumped nodal weights of the grid,
so for a nodal field u

    I(u) = 1/2 u^T K u - lam * sum w_i a_i G_q(u_i) - (1/p) sum w_i |u_i|^p

with p the critical exponent 2n/(n-2s).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .operator import DomainGrid, StiffnessForm

__all__ = [
    "ProblemParams",
    "SingularFieldError",
    "g_q",
    "energy",
    "concave_integral",
    "critical_integral",
    "weak_residual",
    "residual_dual_norm",
]


class SingularFieldError(ValueError):
    """A field touches zero where the singular term needs it positive."""


@dataclass(frozen=True)
class ProblemParams:
    """Parameters of the singular-critical problem on a fixed grid.

    ``a`` holds the nodal values of the weight; ``theta`` is its positive
    lower bound (defaults to min a).
    """

    s: float
    q: float
    lam: float
    a: np.ndarray = field(repr=False)
    theta: float = 0.0
    n: int = 1

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.theta == 0.0:
            object.__setattr__(self, "theta", float(a.min()))
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"singularity exponent q must lie in (0, 1], got {self.q}")
        if not self.lam > 0.0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0.0 < self.s < 0.5 * self.n:
            raise ValueError(f"need n > 2s, got s={self.s}, n={self.n}")
        if not self.theta > 0.0 or a.min() < self.theta * (1 - 1e-12):
            raise ValueError("weight must satisfy a >= theta > 0")

    @property
    def two_star(self) -> float:
        return 2.0 * self.n / (self.n - 2.0 * self.s)

    @property
    def a_sup(self) -> float:
        return float(self.a.max())

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(self.s, self.q, lam, self.a, self.theta, self.n)

    @classmethod
    def constant_weight(cls, grid: DomainGrid, s: float, q: float, lam: float,
                        value: float = 1.0) -> "ProblemParams":
        return cls(s, q, lam, np.full(grid.N, float(value)), float(value))

    @classmethod
    def from_function(cls, grid: DomainGrid, s: float, q: float, lam: float,
                      weight: Callable[[np.ndarray], np.ndarray],
                      theta: float = 0.0) -> "ProblemParams":
        return cls(s, q, lam, np.asarray(weight(grid.nodes), dtype=float), theta)


def g_q(x: Union[float, np.ndarray], q: float):
    """Primitive of t^-q: |x|^(1-q)/(1-q) for q < 1, ln|x| for q = 1.

    Returns -inf at x = 0 when q = 1.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    if q == 1.0:
        with np.errstate(divide="ignore"):
            out = np.log(ax)
    else:
        out = ax ** (1.0 - q) / (1.0 - q)
    return float(out) if np.ndim(out) == 0 else out


def _weights(where) -> np.ndarray:
    if isinstance(where, StiffnessForm):
        return where.grid.quad_weights
    if isinstance(where, DomainGrid):
        return where.quad_weights
    return np.asarray(where, dtype=float)


def concave_integral(u: np.ndarray, P: ProblemParams, where) -> float:
    """sum w_i a_i |u_i|^(1-q); for q = 1 the integrand is a on {u != 0}.

    ``where`` is the grid, the stiffness form, or the weight vector itself.
    """
    w = _weights(where)
    au = np.abs(u)
    if P.q == 1.0:
        return float(w @ (P.a * (au > 0)))
    return float(w @ (P.a * au ** (1.0 - P.q)))


def critical_integral(u: np.ndarray, P: ProblemParams, where) -> float:
    """sum w_i |u_i|^p with p the critical exponent."""
    w = _weights(where)
    return float(w @ np.abs(u) ** P.two_star)


def _check_nonneg(u: np.ndarray) -> None:
    if np.any(u < 0):
        raise ValueError("fields entering the energy must be nonnegative")


def energy(u: np.ndarray, P: ProblemParams, K: StiffnessForm) -> float:
    """Discrete energy functional; raises SingularFieldError if it is -inf."""
    u = np.asarray(u, dtype=float)
    _check_nonneg(u)
    w = K.grid.quad_weights
    if P.q == 1.0 and np.any(u == 0):
        raise SingularFieldError("log term is -inf: field vanishes at a node")
    sing = float(w @ (P.a * g_q(u, P.q)))
    return 0.5 * K.form(u) - P.lam * sing - critical_integral(u, P, w) / P.two_star


def weak_residual(u: np.ndarray, P: ProblemParams, K: StiffnessForm) -> np.ndarray:
    """Gradient of the discrete energy: K u - lam w a u^-q - w u^(p-1)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise SingularFieldError("weak residual needs a strictly positive field")
    w = K.grid.quad_weights
    return K.apply(u) - P.lam * w * P.a * u ** (-P.q) - w * u ** (P.two_star - 1.0)


def residual_dual_norm(u: np.ndarray, P: ProblemParams, K: StiffnessForm) -> float:
    """sqrt(r^T K^-1 r) for the weak residual r."""
    return K.dual_norm(weak_residual(u, P, K))
