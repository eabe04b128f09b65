"""Desk-scale acceptance run.

Omega = (-1, 1), s = 1/4 (critical exponent 4), a = 1, N = 256, q in {1/2, 1}.
Every check records one PASS/FAIL line, collected in the terminal summary,
and then asserts at the stated tolerance.
"""

import math

import numpy as np
import pytest

from conftest import GAP_CELLS, desk_problem, record_criterion
from fracnehari.bubbles import energy_gap_check, gap_threshold
from fracnehari.diagnostics import moser_ladder, truncation_phi
from fracnehari.energy import ProblemParams, energy, weak_residual
from fracnehari.fibering import (Branch, fiber_d2, fiber_roots, lambda_star, m_u,
                                 nehari_project, ray_threshold)
from fracnehari.solver import bracket_failure_lambda, lambda_upper_bound, t_epsilon_continuity
from oracles import gagliardo_direct

Q_VALUES = [0.5, 1.0]
P_CRIT = 4.0


def _base(op, q, lam=1.0):
    return ProblemParams.constant_weight(op.grid, 0.25, q, lam)


@pytest.mark.parametrize("q", Q_VALUES)
def test_c1_fibering_trichotomy(desk, q):
    lam = 0.9 * lambda_star(_base(desk, q), desk.consts)
    P = _base(desk, q, lam)
    rng = np.random.default_rng(101)
    ok_two, ok_zero, worst = 0, 0, 0.0
    for _ in range(100):
        u = rng.random(desk.grid.N) ** rng.uniform(0.3, 8.0)
        rep = fiber_roots(u, P, desk.K)
        target = lam * rep.concave
        if rep.n_roots == 2 and rep.roots[0] < rep.t_max < rep.roots[1]:
            res = max(abs(m_u(u, t, P, desk.K) - target) / max(1.0, target) for t in rep.roots)
            worst = max(worst, res)
            ok_two += res <= 1e-10
        above = P.with_lambda(1.01 * ray_threshold(u, P, desk.K))
        ok_zero += fiber_roots(u, above, desk.K).n_roots == 0
    passed = ok_two == 100 and ok_zero == 100
    record_criterion(f"C1 fibering trichotomy q={q}", passed,
                     f"two roots {ok_two}/100 (worst scaled residual {worst:.1e}), "
                     f"zero roots above threshold {ok_zero}/100")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c2_on_manifold_algebra(desk, q):
    lam = 0.9 * lambda_star(_base(desk, q), desk.consts)
    P = _base(desk, q, lam)
    p = P_CRIT
    upper = (lam * (p - 1 + q) * desk.consts[1 - q] * P.a_sup / (p - 2)) ** (1 / (1 + q))
    lower = ((1 + q) / ((p - 1 + q) * desk.consts[p])) ** (1 / (p - 2))
    rng = np.random.default_rng(202)
    worst, bounds_ok, count = 0.0, True, 0
    for k in range(100):
        u = rng.random(desk.grid.N) ** rng.uniform(0.3, 8.0)
        br = Branch.NPLUS if k % 2 == 0 else Branch.NMINUS
        v = nehari_project(u, P, desk.K, br)
        rep = fiber_roots(v, P, desk.K)
        d2 = fiber_d2(v, 1.0, P, desk.K)
        alt1 = (2 - p) * rep.norm_sq + lam * (p - 1 + q) * rep.concave
        alt2 = (1 + q) * rep.norm_sq - (p - 1 + q) * rep.critical
        scale = max(1.0, abs(d2))
        worst = max(worst, abs(d2 - alt1) / scale, abs(d2 - alt2) / scale)
        norm = math.sqrt(rep.norm_sq)
        bounds_ok &= norm <= upper if br is Branch.NPLUS else norm >= lower
        count += 1
    passed = worst <= 1e-8 and bounds_ok
    record_criterion(f"C2 on-manifold algebra q={q}", passed,
                     f"{count} fields, worst second-derivative mismatch {worst:.1e}, "
                     f"norm bounds {'hold' if bounds_ok else 'violated'} (N+ <= {upper:.3f}, "
                     f"N- >= {lower:.3f})")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c3_two_solutions(q):
    b = desk_problem(q)
    up, v = b.up, b.v
    checks = {
        "N+ residual": up.converged and up.residual_dual <= 1e-6,
        "N- residual": v.converged and v.residual_dual <= 1e-6,
        "N+ sign": fiber_d2(up.u, 1.0, b.P, b.K) > 0,
        "N- sign": fiber_d2(v.u, 1.0, b.P, b.K) < 0,
        "I(u)<0": up.energy < 0,
        "I(u)<I(v)": up.energy < v.energy,
    }
    passed = all(checks.values())
    failed = [k for k, ok in checks.items() if not ok]
    record_criterion(f"C3 two solutions q={q}", passed,
                     f"residuals {up.residual_dual:.1e}/{v.residual_dual:.1e}, "
                     f"I(u)={up.energy:.5f}, I(v)={v.energy:.5f}"
                     + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c4_barrier(q):
    b = desk_problem(q)
    phi = b.barrier.phi
    final = min(np.min(b.up.u - phi), np.min(b.v.u - phi))
    hist = min(min(b.up.margin_history), min(b.v.margin_history))
    passed = b.barrier.active and final >= 0 and hist >= 0
    record_criterion(f"C4 barrier q={q}", passed,
                     f"eta={b.barrier.eta:g}, final margin {final:.3e}, "
                     f"min margin over accepted iterates {hist:.3e}")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c5_energy_gap(q):
    b = desk_problem(q)
    h = b.grid.h
    rep = energy_gap_check(b.up, b.P, b.K, [c * h for c in GAP_CELLS], b.consts.S_d)
    level = gap_threshold(b.P, b.consts.S_d)
    gaps_ok = all(g > 0 for g in rep.gap) and rep.gap[0] >= 1e-4
    v_ok = b.v.energy < b.up.energy + level
    passed = gaps_ok and v_ok
    record_criterion(f"C5 energy gap q={q}", passed,
                     "gap(16h,32h,64h) = " + ", ".join(f"{g:.4f}" for g in rep.gap)
                     + f"; I(v)-I(u) = {b.v.energy - b.up.energy:.4f} vs level {level:.4f}")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c6_window_bracketing(q):
    b = desk_problem(q)
    mu = lambda_upper_bound(b.P, b.eig)
    br = bracket_failure_lambda(b.P, b.K, b.eig, b.lambda_star, mu)
    passed = (0 < b.lambda_star <= mu and math.isfinite(mu) and br.lo_succeeded and br.hi_failed
              and b.lambda_star <= br.lam_fail <= mu)
    record_criterion(f"C6 window bracketing q={q}", passed,
                     f"lambda_*={b.lambda_star:.5f}, empirical failure in "
                     f"({br.lam_ok:.4f}, {br.lam_fail:.4f}], mu*={mu:.5f}")
    assert passed


def test_c7_gradient_and_stiffness_oracles(desk, small):
    rng = np.random.default_rng(707)
    worst = 0.0
    for q in Q_VALUES:
        P = _base(desk, q, 1.0)
        for _ in range(10):
            u = rng.uniform(0.2, 2.0, desk.grid.N)
            r = weak_residual(u, P, desk.K)
            fd = np.empty_like(u)
            for i in range(u.size):
                e = np.zeros_like(u)
                e[i] = 1e-6
                fd[i] = (energy(u + e, P, desk.K) - energy(u - e, P, desk.K)) / 2e-6
            worst = max(worst, np.max(np.abs(fd - r)) / np.max(np.abs(r)))
    form_err = 0.0
    for _ in range(2):
        u = rng.standard_normal(small.grid.N)
        ref = gagliardo_direct(-1.0, 1.0, u, 0.25)
        form_err = max(form_err, abs(small.K.form(u) - ref) / ref)
    passed = worst <= 1e-5 and form_err <= 1e-6
    record_criterion("C7 gradient and stiffness oracles", passed,
                     f"20 fields, worst relative gradient error {worst:.1e}; "
                     f"16-node form vs double quadrature {form_err:.1e}")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c8_moser_ladder(q):
    b = desk_problem(q)
    lad = moser_ladder(b.up.u, b.P, b.K, depth=8)
    k = next(i for i, e in enumerate(lad.exponents) if e >= 200)
    D = lad.lp_norms[k]
    rel = abs(D - lad.sup_norm) / lad.sup_norm
    rng = np.random.default_rng(808)
    convex = True
    for _ in range(100):
        x, y = rng.uniform(-2, 6, 2)
        T, beta = rng.uniform(0.2, 3), rng.uniform(1, 5)
        convex &= truncation_phi(0.5 * (x + y), T, beta) <= 0.5 * (
            truncation_phi(x, T, beta) + truncation_phi(y, T, beta)) * (1 + 1e-12) + 1e-12
    cont = all(truncation_phi(T, T, beta) == pytest.approx(T**beta)
               for T, beta in [(0.5, 2.0), (1.0, 65.0), (2.0, 3.0)])
    passed = lad.bounded and rel <= 0.05 and convex and cont
    record_criterion(f"C8 Moser ladder q={q}", passed,
                     f"D at exponent {lad.exponents[k]:g} = {D:.5f}, ||u||_inf = {lad.sup_norm:.5f}"
                     f" (rel. error {rel:.3f}); power mean {lad.power_means[k]:.5f}; "
                     f"truncation convexity {'ok' if convex else 'fails'}, continuity "
                     f"{'ok' if cont else 'fails'}")
    assert passed


@pytest.mark.parametrize("q", Q_VALUES)
def test_c9_t_epsilon_continuity(q):
    b = desk_problem(q)
    rng = np.random.default_rng(909)
    eps = [10.0**-k for k in range(1, 6)]
    monotone, exact_zero = 0, True
    worst = 0.0
    for _ in range(5):
        w = rng.random(b.grid.N)
        w /= math.sqrt(b.K.form(w))
        rep = t_epsilon_continuity(b.v, w, eps + [0.0], b.P, b.K)
        exact_zero &= rep.t_eps[-1] == 1.0
        dev = rep.deviation[:5]
        monotone += (not rep.truncated) and all(d2 < d1 for d1, d2 in zip(dev, dev[1:]))
        worst = max(worst, dev[-1])
    passed = monotone == 5 and exact_zero
    record_criterion(f"C9 t_eps continuity q={q}", passed,
                     f"monotone in {monotone}/5 unit directions, t_0 exact: {exact_zero}, "
                     f"max |t_eps - 1| at eps=1e-5: {worst:.1e}")
    assert passed
