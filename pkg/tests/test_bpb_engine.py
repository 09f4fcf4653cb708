import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from freelip.bpb_engine import (
    HypothesisNotMet, LipschitzMap, ScalarSolverFailure, beta_transfer, best_attaining_approx, gromov_eta,
    gromov_perturbation, lip_bpb_solve, lip_distance, lip_norm, lip_value, metric_quotient, modulus_estimate,
    normalized, quasi_beta_transfer, query_with_slack, scalar_projection,
)
from freelip.exposing import NotConcave, exposure_delta
from freelip.experiments import example_n_map, quasibeta_map
from freelip.free_space import Molecule, molecule_set
from freelip.metric_core import line_space, random_space, snowflake, truncated_family
from freelip.normed_targets import BetaWitness, NormSpec, QuasiBetaWitness, WitnessError, beta_witness


def scipy_best_scalar(F: LipschitzMap, u: Molecule) -> float:
    """Independent oracle for scalar targets: one LP per sign of g(u)."""
    M = F.space
    f = F.values
    n = M.n
    best = np.inf
    for sign in (1.0, -1.0):
        A, b = [], []
        for a in range(n):
            for c in range(n):
                if a == c:
                    continue
                row = np.zeros(n + 1)
                row[a], row[c] = 1.0, -1.0
                A.append(row.copy())
                b.append(M.dist[a, c])                      # g(a) - g(c) <= d
                row2 = -row
                row2[n] = -M.dist[a, c]
                A.append(row2)
                b.append(-(f[a] - f[c]))                    # (f-g)(a) - (f-g)(c) <= t d
        eq = np.zeros(n + 1)
        eq[u.p], eq[u.q] = 1.0, -1.0
        cost = np.zeros(n + 1)
        cost[n] = 1.0
        bounds = [(0, 0) if i == M.base else (None, None) for i in range(n)] + [(0, None)]
        r = linprog(cost, A_ub=np.array(A), b_ub=np.array(b), A_eq=eq[None], b_eq=[sign * M.dist[u.p, u.q]],
                    bounds=bounds, method="highs")
        assert r.status == 0
        best = min(best, r.fun)
    return best


def test_map_validation():
    M = line_space(3)
    with pytest.raises(ValueError):
        LipschitzMap(M, np.ones((3, 1)), NormSpec.scalar())
    with pytest.raises(ValueError):
        LipschitzMap.from_dict(M, NormSpec.linf(2), {"1": [1.0]})
    F = LipschitzMap.from_dict(M, NormSpec.linf(2), {"1": [1, 0], "2": [0, 2]})
    assert lip_value(F) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        normalized(LipschitzMap.scalar(M, [0, 0, 0]))


def test_example_n_attainment():
    M = truncated_family("integer-line", 12)
    F = example_n_map(M, 3)
    rep = lip_norm(F)
    assert rep.lip_norm == 1.0
    adj = {(p + 1, p) for p in range(11) if p + 1 != 6}        # indices: label k is index k-1
    assert adj <= set(rep.attaining)
    assert F.at(Molecule.of(M, "9", "3"))[0] == pytest.approx(5 / 6)
    jump = best_attaining_approx(F, Molecule.of(M, "7", "6"))
    assert jump.dist == pytest.approx(1.0, abs=1e-9)
    assert jump.lower_bound >= 1 - 1e-9


@pytest.mark.parametrize("seed", range(25))
def test_best_approx_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 7)), rng)
    F, _ = normalized(LipschitzMap.scalar(M, rng.normal(size=M.n)))
    u = molecule_set(M)[int(rng.integers(M.n * (M.n - 1)))]
    r = best_attaining_approx(F, u)
    ref = scipy_best_scalar(F, u)
    assert r.dist == pytest.approx(ref, abs=1e-8)
    assert r.lower_bound <= r.dist + 1e-12
    assert r.lower_bound >= ref - 1e-8
    assert abs(lip_value(r.G) - 1.0) <= 1e-8
    assert abs(abs(r.G.at(u)[0]) - 1.0) <= 1e-8
    assert lip_distance(F, r.G) == pytest.approx(r.dist, abs=1e-8)


@given(st.integers(0, 10_000))
def test_scalar_maps_attain_somewhere(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 6)), rng)
    F, _ = normalized(LipschitzMap.scalar(M, rng.normal(size=M.n)))
    rep = lip_norm(F)
    dists = {(u.p, u.q): best_attaining_approx(F, u).dist for u in molecule_set(M)}
    assert min(dists.values()) <= 1e-8
    for key, d in dists.items():
        assert (d <= 1e-8) == (key in rep.attaining)


def test_solver_trivial_when_attaining():
    M = line_space(3)
    F = LipschitzMap.scalar(M, [0, 1, 2])
    m = Molecule(M, 0, 2)
    res = lip_bpb_solve(F, m, 0.3)
    assert res.success
    sol = res.solution
    assert (sol.u.p, sol.u.q) == (0, 2)
    assert sol.dist_map <= 1e-9 and sol.dist_molecule == 0.0
    assert all(sol.verify(0.3).values())


def test_quasibeta_failure():
    M = line_space(3)
    for k in (2, 4):
        F = quasibeta_map(M, k)
        res = lip_bpb_solve(F, Molecule(M, 0, 2), 0.4)
        assert not res.success and res.certified_failure
        assert res.certified_min >= 0.5 - 1e-6


def test_metric_quotient():
    M = line_space(3)
    assert metric_quotient(Molecule(M, 0, 2), Molecule(M, 0, 2)) == 0.0
    assert metric_quotient(Molecule(M, 0, 2), Molecule(M, 0, 1)) == pytest.approx(0.5)


def _random_query(rng, M, target, slack):
    Y = rng.normal(size=(M.n, target.dim))
    Y[M.base] = 0.0
    F, _ = normalized(LipschitzMap(M, Y, target))
    m = molecule_set(M)[int(rng.integers(M.n * (M.n - 1)))]
    return query_with_slack(F, m, slack), m


@pytest.mark.parametrize("seed", range(12))
def test_gromov_perturbation(seed):
    rng = np.random.default_rng(seed)
    M = snowflake(random_space(int(rng.integers(3, 6)), rng), 0.6)
    target = NormSpec.scalar() if seed % 2 else NormSpec.linf(2)
    eps = 0.4
    eta = gromov_eta(eps, exposure_delta(M, eps))
    F, m = _random_query(rng, M, target, 0.5 * eta)
    sol = gromov_perturbation(F, m, eps)
    assert all(sol.verify(eps).values())
    assert sol.extra["intermediate"] <= eps / 2 + 1e-8
    assert sol.extra["slice_action"] > 1 - sol.extra["delta"]


def test_gromov_preconditions():
    with pytest.raises(NotConcave):
        gromov_perturbation(LipschitzMap.scalar(line_space(3), [0, 1, 1]), Molecule(line_space(3), 0, 2), 0.3)
    M = snowflake(line_space(3), 0.5)
    F = LipschitzMap.scalar(M, [0, 0, 1])
    with pytest.raises(HypothesisNotMet) as e:
        gromov_perturbation(F, Molecule(M, 1, 0), 0.3)
    assert "eta" in e.value.details


@pytest.mark.parametrize("spec", [NormSpec.linf(2), NormSpec.linf(3), NormSpec.yk(3), NormSpec.l1(2)], ids=repr)
def test_beta_transfer(spec):
    rng = np.random.default_rng(7)
    done = 0
    for _ in range(10):
        M = random_space(int(rng.integers(3, 6)), rng)
        F, m = _random_query(rng, M, spec, 0.0)
        eps = 0.3
        try:
            sol = beta_transfer(F, m, eps)
        except ScalarSolverFailure:
            continue
        e = sol.extra
        assert all(sol.verify(eps).values())
        assert e["projection_residual"] <= 1e-9
        assert e["raw_dist"] <= e["raw_bound"] + 1e-9
        assert sol.dist_map <= eps / 2 + e["gamma"] + 1e-9
        assert e["dual_norm_at_lambda"] == pytest.approx(e["dual_norm_max"])
        done += 1
    assert done >= 8


def test_beta_transfer_rejects_bad_witness():
    spec = NormSpec.linf(2)
    M = line_space(3)
    F = LipschitzMap(M, [[0, 0], [1, 0], [1, 1]], spec)
    w = beta_witness(spec)
    with pytest.raises(WitnessError):
        beta_transfer(F, Molecule(M, 1, 0), 0.3, BetaWitness(w.functionals, 2 * w.vectors, w.rho))


@pytest.mark.parametrize("spec", [NormSpec.linf(2), NormSpec.yk(4), NormSpec.l1(3)], ids=repr)
def test_quasi_beta_transfer(spec):
    rng = np.random.default_rng(3)
    w = QuasiBetaWitness.from_beta(spec, beta_witness(spec))
    for _ in range(5):
        M = random_space(5, rng)
        Y = rng.normal(size=(M.n, spec.dim))
        Y[M.base] = 0
        r = quasi_beta_transfer(LipschitzMap(M, Y, spec), 0.3, w)
        assert all(r.checks.values()), r.checks


def test_scalar_projection():
    M = line_space(3)
    y0 = np.array([1.0, 0.0])
    f = LipschitzMap.scalar(M, [0, 1, 1.5])
    G = LipschitzMap(M, [[0, 0], [1, 0.1], [2, 0.1]], NormSpec.linf(2))
    u = Molecule(M, 2, 0)
    sp = scalar_projection(G, u, f, y0, eps=0.3)
    assert all(sp.checks.values())
    assert sp.dist <= sum(sp.bound_terms) + 1e-12


def test_modulus_estimate_named_witness_and_budget():
    M = line_space(3)
    est = modulus_estimate(M, NormSpec.yk(4), 0.4, samples=3, seed=1)
    assert est.eta_upper is not None and est.eta_upper <= 0.25 + 1e-12
    assert est.eta_lower is None or est.eta_lower <= est.eta_upper
    partial = modulus_estimate(random_space(4, np.random.default_rng(0)), NormSpec.scalar(), 0.3, budget=1,
                               samples=20, seed=0)
    assert partial.partial and partial.samples < 20
