import json

import numpy as np
import pytest

from freelip.io import (
    InputError, dumps, load_map, load_space, load_vector, normspec_from_any, space_from_dict, space_to_dict,
    write_csv,
)
from freelip.metric_core import line_space
from freelip.normed_targets import NormSpec


def _w(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def test_space_round_trip(tmp_path):
    M = line_space(4)
    p = _w(tmp_path, "l.json", space_to_dict(M))
    N = load_space(p)
    assert N.labels == M.labels and np.array_equal(N.dist, M.dist) and N.base == M.base


def test_space_csv_with_and_without_row_labels(tmp_path):
    a = _w(tmp_path, "a.csv", "x,y,z\n0,1,2\n1,0,1\n2,1,0\n")
    b = _w(tmp_path, "b.csv", ",x,y,z\nx,0,1,2\ny,1,0,1\nz,2,1,0\n")
    for p in (a, b):
        M = load_space(p)
        assert M.labels == ("x", "y", "z") and M.base == 0
    assert load_space(a, base="z").base == 2


def test_errors_name_the_location(tmp_path):
    with pytest.raises(InputError, match="line 3"):
        load_space(_w(tmp_path, "bad.csv", "x,y\n0,1\n1\n"))
    with pytest.raises(InputError, match="invalid JSON at line 1"):
        load_space(_w(tmp_path, "bad.json", "{nope"))
    with pytest.raises(InputError, match="missing key 'dist'"):
        load_space(_w(tmp_path, "m.json", {"labels": ["a"]}))
    with pytest.raises(InputError, match="file not found"):
        load_space(tmp_path / "absent.json")
    with pytest.raises(InputError, match="triangle violation"):
        space_from_dict({"labels": ["a", "b", "c"], "dist": [[0, 1, 3], [1, 0, 1], [3, 1, 0]]})


def test_vector_and_map(tmp_path):
    M = line_space(3)
    x = load_vector(_w(tmp_path, "x.json", {"space": "line3", "coeff": {"1": 1, "2": -1}}), M)
    assert x.coeff.tolist() == [0, 1, -1]
    with pytest.raises(InputError):
        load_vector(_w(tmp_path, "x0.json", {"space": "line3", "coeff": {"0": 2}}), M)
    F = load_map(_w(tmp_path, "F.json", {"space": "line3", "target": {"variant": "yk", "k": 2},
                                         "images": {"1": [1, -0.5], "2": [0, -1]}}), M)
    assert F.target.variant == "yk" and F.images.shape == (3, 2)
    with pytest.raises(InputError, match="images"):
        load_map(_w(tmp_path, "G.json", {"target": "scalar", "images": {"1": [1, 2]}}), M)


@pytest.mark.parametrize("text,variant,dim", [("scalar", "linf", 1), ("linf:3", "linf", 3), ("l1:2", "l1", 2),
                                              ("yk:5", "yk", 2), ('{"variant": "l1", "dim": 2}', "l1", 2)])
def test_normspec_shorthand(text, variant, dim):
    s = normspec_from_any(text)
    assert s.variant == variant and s.dim == dim


def test_normspec_errors():
    with pytest.raises(InputError):
        normspec_from_any("l7")
    assert normspec_from_any(NormSpec.yk(3)).k == 3


def test_dumps_is_canonical(tmp_path):
    a = dumps({"b": np.float64(1.5), "a": [np.int64(1), float("inf")], "c": np.array([1, 2])})
    assert a == dumps({"c": [1, 2], "a": [1, "inf"], "b": 1.5})
    p = write_csv(tmp_path / "x.csv", ["a", "b"], [{"a": 1, "b": None}, [2, 3]])
    assert p.read_text().splitlines() == ["a,b", "1,", "2,3"]
