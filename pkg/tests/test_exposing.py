import math

import numpy as np
import pytest

from freelip.exposing import (
    NotConcave, alpha_witness, ball_edges, exposing_functional, exposure_delta, molecule_slice_diameter,
    rho_separation, slice_diameter, uniform_exposure_profile,
)
from freelip.free_space import Molecule, ball_vertices, molecule_set
from freelip.metric_core import equilateral_space, line_space, random_space, snowflake


def strict_triangle_pairs(M, tol=1e-12):
    """Pairs whose triangle inequality is strict through every third point (floating-point slack tol*scale)."""
    D = M.dist
    out = set()
    for p in range(M.n):
        for q in range(M.n):
            if p != q and all(D[p, z] + D[z, q] - D[p, q] > tol * M.scale for z in range(M.n) if z not in (p, q)):
                out.add((p, q))
    return out


def test_line_exposure():
    M = line_space(3)
    bad = exposing_functional(Molecule(M, 0, 2))
    assert not bad.feasible
    assert bad.decomposition is not None and len(bad.decomposition.atoms) == 2
    good = exposing_functional(Molecule(M, 0, 1))
    assert good.feasible and good.lipschitz_excess <= 1e-12
    assert good.action == pytest.approx(1.0)
    assert good.rho_gap <= 0.75
    sep = rho_separation(M)
    assert not sep.separated and set(sep.non_vertices) == {(0, 2), (2, 0)}


def test_equilateral_separation():
    sep = rho_separation(equilateral_space(3))
    assert sep.separated and sep.max_rho == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(25))
def test_vertices_equal_exposed_molecules(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 7)), rng)
    exposed = {(m.p, m.q) for m in molecule_set(M) if exposing_functional(m).feasible}
    assert exposed == strict_triangle_pairs(M) == {(m.p, m.q) for m in ball_vertices(M)}


def test_slice_diameter_on_line():
    M = line_space(3)
    f = exposing_functional(Molecule(M, 0, 1)).f
    for delta in (0.1, 0.2):
        r = slice_diameter(M, f, delta)
        assert r.diameter == pytest.approx(3 * delta)
        assert molecule_slice_diameter(Molecule(M, 0, 1), delta) == pytest.approx(3 * delta)
    assert slice_diameter(M, f, 1.5).diameter == pytest.approx(2.0)
    with pytest.raises(ValueError):
        slice_diameter(M, f, 0.0)


def test_edges_of_line_ball():
    M = line_space(3)
    V = ball_vertices(M)
    assert len(ball_edges(M)) == 4           # the ball of a 2-dim space with 4 vertices is a quadrilateral
    assert len(V) == 4


def test_profile_requires_concavity():
    with pytest.raises(NotConcave):
        uniform_exposure_profile(line_space(3), [0.1])
    M = snowflake(line_space(3), 0.5)
    prof = uniform_exposure_profile(M, [0.1, 0.5])
    assert all(d > 0 for _, d in prof.table)
    assert exposure_delta(M, 0.1) <= exposure_delta(M, 0.5)


@pytest.mark.parametrize("M,rho,dmin", [(line_space(3), 1 / 3, 0.5), (equilateral_space(3), 0.5, 1.0),
                                        (line_space(2), 0.0, 1.0)], ids=["line3", "equilateral3", "two-point"])
def test_alpha_witness(M, rho, dmin):
    w = alpha_witness(M)
    assert w.valid
    assert w.rho == pytest.approx(rho)
    assert w.delta_min == pytest.approx(dmin)


@pytest.mark.parametrize("seed", range(8))
def test_alpha_witness_random(seed):
    rng = np.random.default_rng(seed)
    w = alpha_witness(random_space(int(rng.integers(3, 7)), rng))
    assert w.valid and w.rho < 1 and w.delta_min > 0 and math.isfinite(w.delta_min)
