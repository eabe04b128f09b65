import functools
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracnehari.bubbles import BubbleParams, extremal_profile, truncated_bubble
from fracnehari.energy import ProblemParams
from fracnehari.fibering import lambda_star
from fracnehari.operator import (assemble_stiffness, build_grid, estimate_constants,
                                 principal_eigenpair)
from fracnehari.solver import barrier_height, lowest_Nminus, minimize_Nplus

S_ORDER = 0.25
N_DESK = 256
GAP_CELLS = (16, 32, 64)


@functools.lru_cache(maxsize=None)
def desk_operator(N=N_DESK, s=S_ORDER):
    grid = build_grid(-1.0, 1.0, N)
    K = assemble_stiffness(grid, s)
    eig = principal_eigenpair(K)
    consts = estimate_constants(K, [0.0, 0.5, 1.0], starts=5, seed=0)
    return SimpleNamespace(grid=grid, K=K, eig=eig, consts=consts)


@functools.lru_cache(maxsize=None)
def desk_problem(q, rel=0.5):
    """Both branches at lambda = rel * lambda_star on the desk grid."""
    op = desk_operator()
    base = ProblemParams.constant_weight(op.grid, S_ORDER, q, 1.0)
    lstar = lambda_star(base, op.consts)
    P = base.with_lambda(rel * lstar)
    barrier = barrier_height(P, op.eig)
    up = minimize_Nplus(P, op.K, barrier, eig=op.eig)
    h = op.grid.h
    bubbles = [truncated_bubble(op.grid, P, BubbleParams(c * h, op.consts.S_d)) for c in GAP_CELLS]
    bubbles.append(extremal_profile(op.consts, op.K))
    v = lowest_Nminus(P, op.K, barrier, up, bubbles)
    return SimpleNamespace(op=op, P=P, lambda_star=lstar, barrier=barrier, up=up, v=v,
                           bubbles=bubbles, **vars(op))


@pytest.fixture(scope="session")
def desk():
    return desk_operator()


@pytest.fixture(scope="session")
def small():
    grid = build_grid(-1.0, 1.0, 16)
    K = assemble_stiffness(grid, S_ORDER)
    return SimpleNamespace(grid=grid, K=K, eig=principal_eigenpair(K))


@pytest.fixture(scope="session", params=[0.5, 1.0], ids=["q0.5", "q1"])
def branches(request):
    return desk_problem(request.param)


@pytest.fixture(scope="session")
def branches_half():
    return desk_problem(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
