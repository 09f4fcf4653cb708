import numpy as np
import pytest
from hypothesis import given, strategies as st

from freelip.normed_targets import (
    BetaWitness, NormError, NormSpec, QuasiBetaWitness, UnsupportedNorm, WitnessError, ball_description,
    beta_witness, dual_ball_vertices, dual_eval, norm_eval, norm_eval_many, norming_functional,
    validate_beta_witness, validate_quasi_beta,
)

SPECS = [NormSpec.linf(2), NormSpec.linf(3), NormSpec.l1(2), NormSpec.l1(3)] + [NormSpec.yk(k) for k in (2, 3, 5, 8)]


def test_yk_values():
    Y = NormSpec.yk(2)
    assert norm_eval(Y, [-1, 0.5]) == pytest.approx(1.0)
    assert norm_eval(Y, [1, 0]) == pytest.approx(1.0)
    assert dual_eval(Y, [1, 0]) == pytest.approx(1.0)
    assert dual_eval(NormSpec.linf(2), [1, -1]) == pytest.approx(2.0)


def test_yk_ball():
    d = ball_description(NormSpec.yk(4))
    verts = {tuple(np.round(v, 12)) for v in d.vertices}
    assert verts == {(0, 1), (0, -1), (1, 0.75), (-1, -0.75), (-1, 0.75), (1, -0.75)}
    assert len(d.facets) == 6


@pytest.mark.parametrize("spec", SPECS, ids=repr)
def test_facet_and_vertex_forms_agree(spec, rng):
    desc = ball_description(spec)
    via_f = NormSpec.from_facets(desc.facets)
    via_v = NormSpec.from_vertices(desc.vertices)
    X = rng.normal(size=(50, spec.dim))
    a = norm_eval_many(spec, X)
    assert np.allclose(a, norm_eval_many(via_f, X), atol=1e-9)
    assert np.allclose(a, [norm_eval(via_v, x) for x in X], atol=1e-9)


@given(st.integers(0, 10_000), st.sampled_from(SPECS))
def test_norming_functional(seed, spec):
    v = np.random.default_rng(seed).normal(size=spec.dim)
    f = norming_functional(spec, v)
    assert dual_eval(spec, f) == pytest.approx(1.0, abs=1e-9)
    assert f @ v == pytest.approx(norm_eval(spec, v), abs=1e-9)


def test_lp_is_evaluation_only():
    L2 = NormSpec.lp(2, 2)
    assert norm_eval(L2, [3, 4]) == pytest.approx(5.0)
    with pytest.raises(UnsupportedNorm):
        ball_description(L2)


def test_invalid_specs():
    with pytest.raises(NormError):
        NormSpec.from_facets([[1, 0], [0, 1]])            # not symmetric
    with pytest.raises(NormError):
        NormSpec.from_facets([[1, 0], [-1, 0]])           # not full rank
    with pytest.raises(NormError):
        NormSpec.from_dict({"dim": 2})


@pytest.mark.parametrize("spec,rho", [(NormSpec.linf(3), 0.0), (NormSpec.l1(2), 0.0), (NormSpec.yk(2), 0.5),
                                      (NormSpec.yk(5), 0.8)], ids=repr)
def test_beta_witness_rho(spec, rho):
    w = beta_witness(spec)
    assert w.rho == pytest.approx(rho)
    assert validate_beta_witness(spec, w) == []
    again = BetaWitness.from_dict(w.to_dict())
    assert np.array_equal(again.functionals, w.functionals)


def test_bad_beta_witness_detected():
    spec = NormSpec.linf(2)
    w = beta_witness(spec)
    bad = BetaWitness(w.functionals, w.vectors * 2.0, w.rho)
    assert validate_beta_witness(spec, bad)


@pytest.mark.parametrize("spec", SPECS, ids=repr)
def test_quasi_beta_from_beta(spec):
    q = QuasiBetaWitness.from_beta(spec, beta_witness(spec))
    assert validate_quasi_beta(spec, q) == []
    for e in dual_ball_vertices(spec):
        idx, t = q.members(e)
        assert np.allclose(t * e, q.functionals[idx[0]])
    again = QuasiBetaWitness.from_dict(q.to_dict())
    assert again.cover == q.cover


def test_quasi_beta_rejects_incomplete_cover():
    spec = NormSpec.linf(2)
    w = beta_witness(spec)
    with pytest.raises(WitnessError):
        QuasiBetaWitness.from_beta(spec, BetaWitness(w.functionals[:1], w.vectors[:1], w.rho))
