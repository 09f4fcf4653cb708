import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from freelip.free_space import (
    FreeVector, Molecule, OutsideBall, SpaceMismatch, ball_vertices, convex_decompose, free_norm,
    molecule_certificate, molecule_distance, molecule_set, norm_value,
)
from freelip.metric_core import equilateral_space, line_space, random_space


def scipy_norm(x: FreeVector) -> float:
    """Independent oracle: max sum a_p f(p) over 1-Lipschitz f with f(base) = 0."""
    M = x.space
    rows, rhs = [], []
    for p in range(M.n):
        for q in range(M.n):
            if p != q:
                r = np.zeros(M.n)
                r[p], r[q] = 1.0, -1.0
                rows.append(r)
                rhs.append(M.dist[p, q])
    bounds = [(0, 0) if i == M.base else (None, None) for i in range(M.n)]
    res = linprog(-x.coeff, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    assert res.status == 0
    return -res.fun


def test_line_example():
    M = line_space(3)
    x = FreeVector.from_dict(M, {"1": 1, "2": -1})
    c = free_norm(x)
    assert c.value == pytest.approx(1.0)
    assert c.gap <= 1e-12
    assert c.lipschitz_excess <= 1e-12
    m02, m01 = Molecule.of(M, "0", "2"), Molecule.of(M, "0", "1")
    assert molecule_distance(m02, m01) == pytest.approx(1.0)
    assert molecule_distance(m02, -m02) == pytest.approx(2.0)


def test_base_coefficient_rejected_and_mismatch():
    M = line_space(3)
    with pytest.raises(ValueError):
        FreeVector.from_dict(M, {"0": 1.0})
    with pytest.raises(SpaceMismatch):
        FreeVector.delta(M, 1) + FreeVector.delta(line_space(4), 1)


@pytest.mark.parametrize("seed", range(40))
def test_norm_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(2, 9)), rng)
    x = FreeVector(M, rng.normal(size=M.n))
    for dual in ("lp", "flow"):
        c = free_norm(x, dual=dual)
        assert c.certified
        assert c.value == pytest.approx(scipy_norm(x), abs=1e-8 * M.scale)


@given(st.integers(0, 10_000))
def test_molecules_have_norm_one(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(2, 7)), rng)
    for m in molecule_set(M):
        cert = molecule_certificate(m)
        assert cert.lipschitz_excess <= 1e-12
        assert abs(cert.dual_value - 1.0) <= 1e-12
        assert norm_value(m.vector) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_norm_is_a_seminorm(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(2, 7)), rng)
    x, y = FreeVector(M, rng.normal(size=M.n)), FreeVector(M, rng.normal(size=M.n))
    assert norm_value(x + y) <= norm_value(x) + norm_value(y) + 1e-9
    assert norm_value(x * -2.5) == pytest.approx(2.5 * norm_value(x))


def test_vertices_and_decomposition_on_line():
    M = line_space(3)
    assert {(m.p, m.q) for m in ball_vertices(M)} == {(0, 1), (1, 0), (1, 2), (2, 1)}
    d = convex_decompose(Molecule(M, 0, 2).vector)
    assert sorted((m.p, m.q, round(w, 12)) for m, w in d.atoms) == [(0, 1, 0.5), (1, 2, 0.5)]
    assert d.total == pytest.approx(1.0)


def test_equilateral_every_molecule_is_a_vertex():
    M = equilateral_space(4)
    assert len(ball_vertices(M)) == 12


@pytest.mark.parametrize("seed", range(20))
def test_decomposition_reconstructs(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 8)), rng)
    x = FreeVector(M, rng.normal(size=M.n))
    x = x * (1.0 / norm_value(x))
    d = convex_decompose(x)
    assert d.residual <= 1e-9
    assert d.total == pytest.approx(1.0, abs=1e-9)
    assert len(d.atoms) <= M.n
    assert all(w > 0 for _, w in d.atoms)


def test_outside_ball():
    M = line_space(3)
    with pytest.raises(OutsideBall):
        convex_decompose(FreeVector.delta(M, 2) * 5.0)
