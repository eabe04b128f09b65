"""Independent reference computations used by the tests.

Nothing here shares code with the package: the Gagliardo form is integrated
directly in physical space, the energy is summed in plain loops, and the
eigenpair comes from a dense generalized eigensolver.
"""

import math

import numpy as np
from scipy import integrate, linalg


def hat_interpolant(x_lo, x_hi, values):
    """Piecewise-linear function with the given interior nodal values, zero at the ends."""
    N = len(values)
    xs = np.linspace(x_lo, x_hi, N + 2)
    ys = np.concatenate([[0.0], values, [0.0]])
    return lambda x: np.interp(x, xs, ys, left=0.0, right=0.0), xs


def gagliardo_direct(x_lo, x_hi, values, s, epsabs=1e-13, epsrel=1e-11):
    """[u]^2 over R x R for the zero-extended hat interpolant.

    Interior block: 2 * int_Omega int_0^{x_hi - x} (u(x+r) - u(x))^2 r^(-1-2s) dr dx,
    integrated element by element in x with the kink offsets passed to the
    inner quadrature. Exterior block: 2 int_Omega u(x)^2 k_ext(x) dx with the
    closed-form k_ext(x) = ((x - x_lo)^(-2s) + (x_hi - x)^(-2s)) / (2s).
    """
    u, xs = hat_interpolant(x_lo, x_hi, values)

    def inner(x):
        L = x_hi - x
        kinks = [k - x for k in xs if 0 < k - x < L]
        f = lambda r: (u(x + r) - u(x)) ** 2 * r ** (-1.0 - 2.0 * s)
        val, _ = integrate.quad(f, 0.0, L, points=kinks or None, limit=400,
                                epsabs=epsabs, epsrel=epsrel)
        return val

    interior = 0.0
    exterior = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        val, _ = integrate.quad(inner, a, b, limit=200, epsabs=epsabs, epsrel=epsrel)
        interior += val
        g = lambda x: u(x) ** 2 * ((x - x_lo) ** (-2 * s) + (x_hi - x) ** (-2 * s)) / (2 * s)
        val, _ = integrate.quad(g, a, b, limit=200, epsabs=epsabs, epsrel=epsrel)
        exterior += val
    return 2.0 * interior + 2.0 * exterior


def energy_loop(u, K, w, a, lam, q, p):
    """Term-by-term energy with explicit Python loops."""
    N = len(u)
    quad = 0.0
    for i in range(N):
        for j in range(N):
            quad += u[i] * K[i][j] * u[j]
    sing = 0.0
    crit = 0.0
    for i in range(N):
        if q == 1.0:
            sing += w[i] * a[i] * math.log(u[i])
        else:
            sing += w[i] * a[i] * u[i] ** (1.0 - q) / (1.0 - q)
        crit += w[i] * abs(u[i]) ** p
    return 0.5 * quad - lam * sing - crit / p


def dense_eigenpair(K, w):
    vals, vecs = linalg.eigh(K, np.diag(w))
    phi = vecs[:, 0]
    phi = phi / phi[np.argmax(np.abs(phi))]
    return vals[0], phi


def sobolev_multistart(K, w, p, starts=50, seed=0):
    """min of u^T K u / (sum w |u|^p)^(2/p) by L-BFGS from random positive starts."""
    from scipy import optimize

    rng = np.random.default_rng(seed)

    def obj(u):
        Ku = K @ u
        num = u @ Ku
        mass = w @ np.abs(u) ** p
        den = mass ** (2.0 / p)
        val = num / den
        grad = 2 * Ku / den - val * (2.0 / p) * p * w * np.abs(u) ** (p - 1) * np.sign(u) / mass
        return val, grad

    best = np.inf
    for _ in range(starts):
        u0 = rng.random(len(w)) ** 8  # peaked starts
        res = optimize.minimize(obj, u0, jac=True, method="L-BFGS-B",
                                options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-10})
        best = min(best, res.fun)
    return best


def power_constant(K, w, alpha, starts=20, seed=0):
    """max of sum w u^alpha / (u^T K u)^(alpha/2) over positive u by L-BFGS-B."""
    from scipy import optimize

    rng = np.random.default_rng(seed)

    def obj(u):
        Ku = K @ u
        nrm = u @ Ku
        mass = w @ u**alpha
        val = mass / nrm ** (alpha / 2)
        grad = alpha * w * u ** (alpha - 1) / nrm ** (alpha / 2) - val * alpha * Ku / nrm
        return -val, -grad

    best = -np.inf
    for _ in range(starts):
        res = optimize.minimize(obj, rng.random(len(w)) + 0.5, jac=True, method="L-BFGS-B",
                                bounds=[(1e-10, None)] * len(w),
                                options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12})
        best = max(best, -res.fun)
    return best
