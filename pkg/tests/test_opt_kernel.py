import numpy as np
import pytest
from scipy.optimize import linprog

from freelip.opt_kernel import (
    EQ, GE, INFEASIBLE, LE, UNBOUNDED, FlowError, FlowNetwork, LinearProgram, LPError, dual_bound,
    farkas_value, lp_solve, mcf_solve, primal_residual,
)


def _scipy(p: LinearProgram):
    sgn = 1.0 if p.sense == "min" else -1.0
    rel = np.array(p.relations)
    A_ub = np.vstack([p.A[rel == LE], -p.A[rel == GE]])
    b_ub = np.concatenate([p.b[rel == LE], -p.b[rel == GE]])
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(p.lower, p.upper)]
    r = linprog(sgn * p.c, A_ub=A_ub if len(A_ub) else None, b_ub=b_ub if len(b_ub) else None,
                A_eq=p.A[rel == EQ] if (rel == EQ).any() else None, b_eq=p.b[rel == EQ] if (rel == EQ).any() else None,
                bounds=bounds, method="highs")
    return r


def _random_lp(rng, m, n):
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 2, size=n)
    rel = tuple(rng.choice([LE, GE, EQ], p=[0.6, 0.25, 0.15]) for _ in range(m))
    b = A @ x0
    b = np.array([bi + (1.0 if r == LE else -1.0 if r == GE else 0.0) for bi, r in zip(b, rel)])
    lo = np.where(rng.random(n) < 0.3, -np.inf, 0.0)
    hi = np.where(rng.random(n) < 0.3, 5.0, np.inf)
    c = rng.integers(-3, 4, size=n).astype(float)
    return LinearProgram(c, A, rel, b, lo, hi, rng.choice(["min", "max"]))


def test_textbook_example():
    p = LinearProgram.build([3, 2], [([1, 1], LE, 4), ([1, 3], LE, 6)], sense="max")
    s = lp_solve(p)
    assert s.optimal
    assert s.objective == pytest.approx(12.0)
    assert s.gap <= 1e-9
    bound, res = dual_bound(p, s.duals)
    assert res == 0.0 and bound == pytest.approx(12.0)


@pytest.mark.parametrize("seed", range(60))
def test_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    p = _random_lp(rng, int(rng.integers(2, 9)), int(rng.integers(2, 7)))
    s = lp_solve(p)
    r = _scipy(p)
    if r.status == 2:
        assert s.status == INFEASIBLE
        assert farkas_value(p, s.farkas)[0] > 0
        return
    if r.status == 3:
        assert s.status == UNBOUNDED
        return
    assert r.status == 0
    assert s.optimal
    assert s.objective == pytest.approx(r.fun * (1 if p.sense == "min" else -1), abs=1e-7)
    assert primal_residual(p, s.x) <= 1e-9 * p.scale
    assert s.gap <= 1e-8 * p.scale


@pytest.mark.parametrize("seed", range(20))
def test_tall_programs_via_dual(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 5))
    A = rng.normal(size=(40, n))
    b = np.abs(rng.normal(size=40)) + 0.5
    c = rng.normal(size=n)
    p = LinearProgram(c, A, (LE,) * 40, b, np.full(n, -np.inf), np.full(n, np.inf), "min")
    s = lp_solve(p)
    r = _scipy(p)
    if r.status == 3:
        assert s.status == UNBOUNDED
        return
    assert s.optimal
    assert s.objective == pytest.approx(r.fun, abs=1e-7)
    assert dual_bound(p, s.duals)[0] == pytest.approx(s.objective, abs=1e-8)


def test_infeasible_has_farkas_certificate():
    p = LinearProgram.build([1, 1], [([1, 1], LE, 1), ([1, 1], GE, 3)])
    s = lp_solve(p)
    assert s.status == INFEASIBLE
    val, res = farkas_value(p, s.farkas)
    assert val > 0 and res <= 1e-12


def test_unbounded_has_ray():
    p = LinearProgram.build([1, 0], [([1, -1], LE, 1)], sense="max")
    s = lp_solve(p)
    assert s.status == UNBOUNDED
    assert s.ray @ p.c > 0
    assert np.all(p.A @ s.ray <= 1e-12)


def test_malformed_programs_rejected():
    with pytest.raises(LPError):
        LinearProgram([1, 2], [[1, 2, 3]], (LE,), [1], None, None)
    with pytest.raises(LPError):
        LinearProgram([1], [[1]], ("<",), [1], None, None)
    with pytest.raises(LPError):
        LinearProgram([np.nan], [[1]], (LE,), [1], None, None)


def test_degenerate_cycling_example_terminates():
    # Beale's example cycles under plain Dantzig pricing without a fallback rule
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    p = LinearProgram(c, A, (LE, LE, LE), [0, 0, 1], None, None, "min")
    s = lp_solve(p)
    assert s.optimal
    assert s.objective == pytest.approx(-0.05)


# ---------------------------------------------------------------------------
# min-cost flow

def test_flow_small_examples():
    C = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], float)
    r = mcf_solve(FlowNetwork.complete(C, [1, 0, -1]))
    assert r.cost == pytest.approx(2.0)          # reroute through the middle node
    assert r.gap <= 1e-12
    r0 = mcf_solve(FlowNetwork.complete(C, [0, 0, 0]))
    assert r0.cost == 0.0


@pytest.mark.parametrize("seed", range(40))
def test_flow_matches_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    C = rng.uniform(0.5, 5, size=(n, n))
    b = rng.normal(size=n)
    b -= b.mean()
    net = FlowNetwork.complete(C, b)
    r = mcf_solve(net)
    s = lp_solve(net.as_lp())
    assert s.optimal
    assert r.cost == pytest.approx(s.objective, abs=1e-9)
    assert r.gap <= 1e-9
    assert r.min_reduced_cost >= -1e-9


def test_flow_validation():
    with pytest.raises(FlowError):
        FlowNetwork.complete(np.ones((2, 2)), [1, 0])
    with pytest.raises(FlowError):
        FlowNetwork.complete(-np.ones((2, 2)), [1, -1])
