import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freelip.metric_core import (
    MetricError, PointedMetricSpace, analyze, equilateral_space, gromov_constant_bruteforce, gromov_product,
    holder_bound, holder_bound_check, line_space, parse_distance, random_euclidean, random_graph_metric,
    random_space, random_ultrametric, snowflake, truncated_family, validate,
)


def test_line_report():
    M = line_space(3)
    r = analyze(M)
    assert not r.concave
    assert r.gromov_constant == 0.0
    assert (0, 2, 1) in r.degenerate_triples
    assert not r.ultrametric
    assert r.concave_pairs[(0, 1)] and r.concave_pairs[(1, 2)] and not r.concave_pairs[(0, 2)]


def test_equilateral_and_two_point():
    r = analyze(equilateral_space(4))
    assert r.concave and r.ultrametric
    assert r.gromov_constant == pytest.approx(0.5)
    two = analyze(line_space(2))
    assert two.gromov_constant == 1.0 and two.concave


def test_validation_errors():
    with pytest.raises(MetricError, match="triangle violation"):
        validate(["a", "b", "c"], [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    with pytest.raises(MetricError, match="zero distance"):
        validate(["a", "b"], [[0, 0], [0, 0]])
    with pytest.raises(MetricError):
        validate(["a", "b"], [[0, 1], [2, 0]])
    with pytest.raises((MetricError, ValueError, KeyError)):
        validate(["a", "b"], [[0, 1], [1, 0]], base="zzz")


def test_validate_accepts_fractions_and_label_base():
    M = validate(["x", "y", "z"], [[0, "1/2", 1], ["1/2", 0, "1/2"], [1, "1/2", 0]], base="y")
    assert M.base == 1
    assert M.d("x", "y") == 0.5
    assert parse_distance("3/4") == 0.75


def test_gromov_product_definition():
    M = line_space(3)
    assert gromov_product(M, 0, 2, 1) == 0.0
    assert gromov_product(M, 0, 1, 2) == pytest.approx(1.0)


def test_snowflake_tightness_on_line():
    gc = analyze(snowflake(line_space(3), 0.5)).gromov_constant
    assert abs(gc - (1 - math.sqrt(2) / 2)) <= 1e-12
    assert holder_bound(0.5) == pytest.approx(1 - math.sqrt(2) / 2)


@pytest.mark.parametrize("seed", range(40))
def test_analyze_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 8)), rng)
    assert analyze(M).gromov_constant == pytest.approx(gromov_constant_bruteforce(M), abs=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_ultrametric_half_bound(seed):
    rng = np.random.default_rng(seed)
    M = random_ultrametric(int(rng.integers(3, 10)), rng)
    r = analyze(M)
    assert r.ultrametric
    assert r.gromov_constant >= 0.5 - 1e-12


@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
def test_holder_bound_property(seed, theta):
    rng = np.random.default_rng(seed)
    M = random_space(int(rng.integers(3, 7)), rng)
    h = holder_bound_check(M, theta)
    assert h.passed
    assert h.min_ratio >= holder_bound(theta) - 1e-9


def test_truncated_families():
    L = truncated_family("integer-line", 12)
    assert L.labels[L.base] == "1" and L.d("1", "12") == 11
    P = truncated_family("parabola", 2)
    assert P.d("1", "2") == pytest.approx(math.sqrt(1 + 9 / 16))
    assert analyze(truncated_family("parabola", 30)).concave
    with pytest.raises(ValueError):
        truncated_family("circle", 5)
    with pytest.raises(ValueError):
        truncated_family("parabola", 1)


def test_generators_produce_metrics(rng):
    for gen in (random_ultrametric, random_euclidean, random_graph_metric):
        M = gen(6, rng)
        validate(M.labels, M.dist)
    assert isinstance(random_space(5, rng, kind="uniform"), PointedMetricSpace)
