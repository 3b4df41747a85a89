"""Independent reference implementations used as test oracles."""

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.sparse import csr_matrix


def naive_mobius(f):
    """g(S) = sum over T subset of S of (-1)^(|S|-|T|) f(T), by explicit enumeration."""
    f = np.asarray(f, dtype=np.float64)
    size = len(f)
    g = np.zeros(size)
    for s in range(size):
        for t in range(size):
            if t & ~s == 0:
                g[s] += (-1) ** (bin(s).count("1") - bin(t).count("1")) * f[t]
    return g


def naive_zeta(g):
    g = np.asarray(g, dtype=np.float64)
    size = len(g)
    return np.array([sum(g[t] for t in range(size) if t & ~s == 0) for s in range(size)])


def naive_or_interactions(h):
    """-sum over T subset of S of (-1)^(|S|-|T|) h(N minus T)."""
    h = np.asarray(h, dtype=np.float64)
    size = len(h)
    full = size - 1
    g = np.zeros(size)
    for s in range(size):
        for t in range(size):
            if t & ~s == 0:
                g[s] -= (-1) ** (bin(s).count("1") - bin(t).count("1")) * h[full ^ t]
    return g


def mobius_matrix(n):
    size = 1 << n
    m = np.zeros((size, size))
    for s in range(size):
        for t in range(size):
            if t & ~s == 0:
                m[s, t] = (-1) ** (bin(s).count("1") - bin(t).count("1"))
    return m


def lp_floor(values, rho=0.5):
    """Exact minimum of sum |I_and| + |I_or| over the gamma box, by linear programming.

    Variables are gamma (2^n, gamma_0 fixed at 0) and slacks for |I_and|, |I_or|
    on non-empty masks.  I_and = M (half + gamma), I_or = -M R (half - gamma),
    with M the Möbius matrix and R the mask complement permutation.
    """
    values = np.asarray(values, dtype=np.float64)
    size = len(values)
    n = size.bit_length() - 1
    half = 0.5 * (values - values[0])
    span = np.max(np.abs(values - values[0]))
    m = mobius_matrix(n)
    r = np.eye(size)[::-1]
    a_and = m
    a_or = m @ r  # I_or = -a_or @ half + a_or @ gamma
    c_and = a_and @ half
    c_or = -a_or @ half
    rows = np.arange(1, size)
    k = size - 1
    # x = [gamma (size), s_and (k), s_or (k)]
    obj = np.concatenate([np.zeros(size), np.ones(2 * k)])
    blocks = []
    rhs = []
    for coef, c in ((a_and, c_and), (a_or, c_or)):
        sl = np.zeros((k, 2 * k))
        idx = 0 if coef is a_and else k
        sl[np.arange(k), idx + np.arange(k)] = -1
        # +(coef g + c) <= s  and  -(coef g + c) <= s
        blocks.append(np.hstack([coef[rows], sl]))
        rhs.append(-c[rows])
        blocks.append(np.hstack([-coef[rows], sl]))
        rhs.append(c[rows])
    a_ub = csr_matrix(np.vstack(blocks))
    b_ub = np.concatenate(rhs)
    bound = rho * span
    bounds = [(0, 0)] + [(-bound, bound)] * (size - 1) + [(0, None)] * (2 * k)
    res = linprog(obj, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(res.fun), res.x[:size]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
