"""File formats: spaces, free vectors, maps and norms as JSON or CSV.

Every loader raises :class:`InputError` naming the file and the offending
key or line, so command-line errors point at the bad input.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .free_space import FreeVector
from .metric_core import MetricError, PointedMetricSpace, parse_distance, validate
from .normed_targets import NormError, NormSpec


class InputError(ValueError):
    def __init__(self, source, message: str):
        super().__init__(f"{source}: {message}")
        self.source = str(source)


def jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            vals = [r.get(c, "") for c in columns] if isinstance(r, dict) else list(r)
            w.writerow([jsonable(v) for v in vals])
    return path


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(path, "file not found") from None
    except json.JSONDecodeError as e:
        raise InputError(path, f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None


# ---------------------------------------------------------------------------
# spaces

def space_to_dict(M: PointedMetricSpace) -> dict:
    return {"id": M.id, "labels": list(M.labels), "base": M.labels[M.base], "dist": M.dist.tolist()}


def space_from_dict(d: dict, base=None, source="<space>", tol: float | None = None) -> PointedMetricSpace:
    if not isinstance(d, dict):
        raise InputError(source, "expected a JSON object")
    for key in ("labels", "dist"):
        if key not in d:
            raise InputError(source, f"missing key {key!r}")
    labels = [str(s) for s in d["labels"]]
    try:
        dist = [[parse_distance(v) for v in row] for row in d["dist"]]
    except (TypeError, ValueError) as e:
        raise InputError(source, f"key 'dist': {e}") from None
    b = base if base is not None else d.get("base", labels[0] if labels else 0)
    kw = {} if tol is None else {"tol": tol}
    try:
        return validate(labels, dist, base=b, id=str(d.get("id", Path(str(source)).stem)), **kw)
    except MetricError as e:
        raise InputError(source, str(e)) from None
    except (KeyError, ValueError) as e:
        raise InputError(source, str(e)) from None


def _is_number(s: str) -> bool:
    try:
        parse_distance(s)
        return True
    except (TypeError, ValueError):
        return False


def load_space_csv(path, base=None, tol: float | None = None) -> PointedMetricSpace:
    try:
        rows = [r for r in csv.reader(Path(path).read_text().splitlines()) if any(c.strip() for c in r)]
    except FileNotFoundError:
        raise InputError(path, "file not found") from None
    if not rows:
        raise InputError(path, "empty file")
    header = [c.strip() for c in rows[0]]
    body = rows[1:]
    labelled = bool(body) and not _is_number(body[0][0].strip())
    if labelled and header and header[0] == "":
        header = header[1:]
    dist = []
    for ln, r in enumerate(body, start=2):
        cells = [c.strip() for c in (r[1:] if labelled else r)]
        if len(cells) != len(header):
            raise InputError(path, f"line {ln}: expected {len(header)} entries, got {len(cells)}")
        try:
            dist.append([parse_distance(c) for c in cells])
        except (TypeError, ValueError) as e:
            raise InputError(path, f"line {ln}: {e}") from None
    return space_from_dict({"labels": header, "dist": dist, "id": Path(path).stem}, base=base, source=path, tol=tol)


def load_space(path, base=None, tol: float | None = None) -> PointedMetricSpace:
    if str(path).lower().endswith(".csv"):
        return load_space_csv(path, base, tol)
    return space_from_dict(_read_json(path), base=base, source=path, tol=tol)


# ---------------------------------------------------------------------------
# vectors, norms, maps

def vector_from_dict(M: PointedMetricSpace, d: dict, source="<vector>") -> FreeVector:
    coeff = d.get("coeff") if isinstance(d, dict) else None
    if not isinstance(coeff, dict):
        raise InputError(source, "expected an object with a 'coeff' mapping")
    try:
        return FreeVector.from_dict(M, coeff)
    except (KeyError, ValueError) as e:
        raise InputError(source, f"key 'coeff': {e}") from None


def load_vector(path, M: PointedMetricSpace) -> FreeVector:
    return vector_from_dict(M, _read_json(path), path)


def normspec_from_any(value, source="<norm>") -> NormSpec:
    """Accept a NormSpec dict, a JSON string, a path, or a shorthand like
    ``linf:2``, ``l1:3``, ``yk:4``, ``scalar``."""
    if isinstance(value, NormSpec):
        return value
    if isinstance(value, dict):
        try:
            return NormSpec.from_dict(value)
        except (NormError, KeyError, TypeError, ValueError) as e:
            raise InputError(source, str(e)) from None
    s = str(value).strip()
    if s.startswith("{"):
        try:
            return normspec_from_any(json.loads(s), source)
        except json.JSONDecodeError as e:
            raise InputError(source, f"invalid JSON: {e.msg}") from None
    if Path(s).suffix == ".json":
        return normspec_from_any(_read_json(s), s)
    name, _, arg = s.partition(":")
    try:
        if name in ("scalar", "R"):
            return NormSpec.scalar()
        if name == "linf":
            return NormSpec.linf(int(arg or 1))
        if name == "l1":
            return NormSpec.l1(int(arg or 1))
        if name == "yk":
            return NormSpec.yk(int(arg))
        if name == "lp":
            p, _, d = arg.partition(",")
            return NormSpec.lp(float(p), int(d or 2))
    except (NormError, ValueError) as e:
        raise InputError(source, str(e)) from None
    raise InputError(source, f"unrecognized norm {s!r}")


def map_from_dict(M: PointedMetricSpace, d: dict, source="<map>", target: NormSpec | None = None):
    from .bpb_engine import LipschitzMap

    if not isinstance(d, dict) or "images" not in d:
        raise InputError(source, "expected an object with an 'images' mapping")
    if target is None:
        if "target" not in d:
            raise InputError(source, "missing key 'target'")
        target = normspec_from_any(d["target"], f"{source}: key 'target'")
    try:
        return LipschitzMap.from_dict(M, target, d["images"])
    except (KeyError, ValueError) as e:
        raise InputError(source, f"key 'images': {e}") from None


def load_map(path, M: PointedMetricSpace, target: NormSpec | None = None):
    return map_from_dict(M, _read_json(path), path, target)


def load_json(path):
    return _read_json(path)
