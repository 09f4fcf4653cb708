"""Finite pointed metric spaces: validation, Gromov products, concavity,
ultrametricity, snowflakes and random generators."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

TRIANGLE_TOL = 1e-9
STRICT_TOL = 1e-12


class MetricError(ValueError):
    """Raised when a distance matrix fails the metric axioms.

    ``violations`` holds one :class:`Violation` per offending entry or triple.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(v.message for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(head + more)


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple
    message: str


@dataclass(frozen=True, eq=False)
class PointedMetricSpace:
    labels: tuple
    base: int
    dist: np.ndarray
    id: str = "M"

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def scale(self) -> float:
        return 1.0 + float(self.dist.max(initial=0.0))

    def index(self, label) -> int:
        """Position of a point given by label (or by an int index)."""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if 0 <= label < self.n:
                return int(label)
            raise KeyError(f"point index {label} out of range")
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown point label {label!r}") from None

    def d(self, p, q) -> float:
        return float(self.dist[self.index(p), self.index(q)])

    def with_id(self, new_id: str) -> "PointedMetricSpace":
        return PointedMetricSpace(self.labels, self.base, self.dist, new_id)


def check_axioms(dist, tol: float = TRIANGLE_TOL) -> list[Violation]:
    """List every violated metric axiom; empty means the matrix is a metric."""
    D = np.asarray(dist, dtype=float)
    out: list[Violation] = []
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        return [Violation("shape", (), f"distance matrix must be square, got shape {D.shape}")]
    n = D.shape[0]
    if n < 2:
        return [Violation("size", (), "a pointed metric space needs at least 2 points")]
    if not np.all(np.isfinite(D)):
        i, j = map(int, np.argwhere(~np.isfinite(D))[0])
        return [Violation("finite", (i, j), f"non-finite distance at ({i},{j})")]
    scale = 1.0 + np.abs(D).max()
    for i in range(n):
        if D[i, i] != 0.0:
            out.append(Violation("diagonal", (i, i), f"nonzero self-distance at ({i},{i})"))
    for i in range(n):
        for j in range(i + 1, n):
            if D[i, j] != D[j, i]:
                out.append(Violation("asymmetry", (i, j), f"asymmetry ({i},{j}): {D[i, j]!r} != {D[j, i]!r}"))
            if D[i, j] <= 0 or D[j, i] <= 0:
                out.append(Violation("zero", (i, j), f"zero distance ({i},{j})" if min(D[i, j], D[j, i]) == 0
                                     else f"negative distance ({i},{j})"))
    if out:
        return out
    # d(i,j) - d(i,k) - d(k,j) for all (i,j,k)
    excess = D[:, :, None] - D[:, None, :] - D.T[None, :, :]
    bad = np.argwhere(excess > tol * scale)
    for i, j, k in bad:
        if i < j:
            out.append(Violation("triangle", (int(i), int(j), int(k)),
                                 f"triangle violation ({i},{j}) via {k}: {D[i, j]:g} > {D[i, k]:g} + {D[k, j]:g}"))
    return out


def parse_distance(value) -> float:
    """Accept numbers or decimal/rational strings such as ``"3/7"``."""
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


def validate(labels, dist, base=0, id: str = "M", tol: float = TRIANGLE_TOL) -> PointedMetricSpace:
    """Build a validated space, raising :class:`MetricError` listing all violations."""
    rows = [[parse_distance(v) for v in row] for row in dist]
    labels = [str(s) for s in labels]
    if len(set(labels)) != len(labels):
        raise MetricError([Violation("labels", (), "duplicate point labels")])
    if any(len(r) != len(rows) for r in rows):
        raise MetricError([Violation("shape", (), "distance matrix must be square")])
    if len(labels) != len(rows):
        raise MetricError([Violation("labels", (), f"{len(labels)} labels for a {len(rows)}x{len(rows)} matrix")])
    D = np.array(rows, dtype=float).reshape(len(rows), len(rows))
    violations = check_axioms(D, tol)
    if violations:
        raise MetricError(violations)
    if isinstance(base, str):
        if base not in labels:
            raise MetricError([Violation("base", (), f"base label {base!r} not among labels")])
        base = labels.index(base)
    if not 0 <= int(base) < len(labels):
        raise MetricError([Violation("base", (), f"base index {base} out of range")])
    return PointedMetricSpace(tuple(labels), int(base), D, id)


def gromov_product(M: PointedMetricSpace, x, y, z) -> float:
    """(x,y)_z = (d(x,z) + d(z,y) - d(x,y)) / 2."""
    x, y, z = M.index(x), M.index(y), M.index(z)
    if len({x, y, z}) < 3:
        raise ValueError(f"gromov_product needs distinct points, got {(x, y, z)}")
    D = M.dist
    return 0.5 * (D[x, z] + D[z, y] - D[x, y])


def _triple_arrays(D: np.ndarray):
    """Gromov products G[x,y,z], min-leg denominators and the distinct-triple mask."""
    n = D.shape[0]
    G = 0.5 * (D[:, None, :] + D[None, :, :] - D[:, :, None])  # (x,y)_z at [x,y,z]
    den = np.minimum(D[:, None, :], D[None, :, :])
    idx = np.arange(n)
    distinct = (idx[:, None, None] != idx[None, :, None]) & (idx[:, None, None] != idx[None, None, :]) \
        & (idx[None, :, None] != idx[None, None, :])
    return G, den, distinct


@dataclass
class MetricReport:
    concave: bool
    concave_pairs: dict
    ultrametric: bool
    gromov_constant: float
    witness_triple: tuple | None
    degenerate_triples: list
    n_points: int
    tol: float

    def to_dict(self, M: PointedMetricSpace | None = None) -> dict:
        lab = (lambda i: M.labels[i]) if M is not None else (lambda i: i)
        return {
            "concave": self.concave,
            "non_concave_pairs": [[lab(i), lab(j)] for (i, j), ok in sorted(self.concave_pairs.items()) if not ok],
            "ultrametric": self.ultrametric,
            "gromov_constant": self.gromov_constant,
            "witness_triple": None if self.witness_triple is None else [lab(i) for i in self.witness_triple],
            "degenerate_triples": [[lab(i) for i in t] for t in self.degenerate_triples],
            "n_points": self.n_points,
            "tol": self.tol,
        }


def analyze(M: PointedMetricSpace, tol: float = STRICT_TOL) -> MetricReport:
    """Concavity, ultrametricity and the Gromov-concavity constant by exhaustive triples.

    The constant is ``min (x,y)_z / min(d(x,z), d(y,z))`` over ordered distinct
    triples; it lies in [0, 1].  With no triples (two points) it is reported as 1.
    """
    D = M.dist
    n = M.n
    thr = tol * M.scale
    G, den, distinct = _triple_arrays(D)
    ratio = np.where(distinct, G / np.where(distinct, den, 1.0), np.inf)
    if n >= 3:
        flat = int(np.argmin(ratio))
        x, y, z = np.unravel_index(flat, ratio.shape)
        gc = max(float(ratio[x, y, z]), 0.0)
        witness = (int(x), int(y), int(z))
    else:
        gc, witness = 1.0, None
    # strictness: d(x,y) < d(x,z) + d(z,y) - thr  <=>  2*(x,y)_z > thr
    slack = 2.0 * G
    degenerate = []
    pairs = {}
    for i in range(n):
        for j in range(i + 1, n):
            ok = True
            for k in range(n):
                if k != i and k != j and slack[i, j, k] <= thr:
                    degenerate.append((i, j, k))
                    ok = False
            pairs[(i, j)] = ok
    ultra_excess = D[:, :, None] - np.maximum(D[:, None, :], D[None, :, :])
    ultra = bool(np.all(ultra_excess[distinct] <= thr)) if n >= 3 else True
    concave = gc > tol or not degenerate
    return MetricReport(concave, pairs, ultra, gc, witness, degenerate, n, tol)


def gromov_constant_bruteforce(M: PointedMetricSpace) -> float:
    """Plain triple loop, kept as an independent reference for tests."""
    best = math.inf
    D = M.dist
    for x in range(M.n):
        for y in range(M.n):
            for z in range(M.n):
                if len({x, y, z}) == 3:
                    best = min(best, 0.5 * (D[x, z] + D[z, y] - D[x, y]) / min(D[x, z], D[y, z]))
    return 1.0 if best == math.inf else max(best, 0.0)


def snowflake(M: PointedMetricSpace, theta: float) -> PointedMetricSpace:
    """The space (M, d^theta)."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"snowflake exponent must lie in (0,1), got {theta}")
    return PointedMetricSpace(M.labels, M.base, M.dist ** theta, f"{M.id}^{theta:g}")


def holder_bound(theta: float) -> float:
    """Lower bound (2 - 2^theta)/2 on the Gromov constant of any d^theta."""
    return (2.0 - 2.0 ** theta) / 2.0


@dataclass
class HolderReport:
    theta: float
    bound: float
    min_ratio: float
    passed: bool
    one_minus_two_pow_theta: float  # negative on (0,1); kept for reference only

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def holder_bound_check(M: PointedMetricSpace, theta: float, tol: float = TRIANGLE_TOL) -> HolderReport:
    S = snowflake(M, theta)
    bound = holder_bound(theta)
    ratio = analyze(S).gromov_constant
    return HolderReport(theta, bound, ratio, ratio >= bound - tol, 1.0 - 2.0 ** theta)


def truncated_family(name: str, N: int) -> PointedMetricSpace:
    """``integer-line``: {1..N} with |p-q|, base 1.  ``parabola``: (n, 1/n^2), base n=1."""
    if name not in ("integer-line", "parabola"):
        raise ValueError(f"unknown family {name!r}; expected 'integer-line' or 'parabola'")
    if int(N) != N or N < 2:
        raise ValueError(f"family size must be an integer >= 2, got {N}")
    N = int(N)
    ks = np.arange(1, N + 1, dtype=float)
    if name == "integer-line":
        D = np.abs(ks[:, None] - ks[None, :])
    else:
        pts = np.stack([ks, 1.0 / ks ** 2], axis=1)
        D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    labels = tuple(str(k) for k in range(1, N + 1))
    return PointedMetricSpace(labels, 0, D, f"{name}-{N}")


# ---------------------------------------------------------------------------
# named small spaces and random generators

def line_space(n: int = 3) -> PointedMetricSpace:
    """Points 0..n-1 on the real line, base 0."""
    k = np.arange(n, dtype=float)
    return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, np.abs(k[:, None] - k[None, :]), f"line{n}")


def equilateral_space(n: int = 3) -> PointedMetricSpace:
    D = np.ones((n, n)) - np.eye(n)
    return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, D, f"equilateral{n}")


def random_ultrametric(n: int, rng: np.random.Generator, id: str | None = None) -> PointedMetricSpace:
    """Ultrametric from a random binary merge tree with increasing merge heights."""
    clusters = [[i] for i in range(n)]
    D = np.zeros((n, n))
    height = 0.0
    while len(clusters) > 1:
        height += float(rng.uniform(0.1, 1.0))
        a, b = sorted(rng.choice(len(clusters), size=2, replace=False), reverse=True)
        A, B = clusters.pop(a), clusters.pop(b)
        for i in A:
            for j in B:
                D[i, j] = D[j, i] = height
        clusters.append(A + B)
    return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, D, id or f"ultra{n}")


def random_euclidean(n: int, rng: np.random.Generator, dim: int = 2, grid: int = 10,
                     id: str | None = None) -> PointedMetricSpace:
    """Distinct random integer grid points under the Euclidean metric."""
    if grid ** dim < n:
        raise ValueError("grid too small for the requested number of distinct points")
    cells = rng.choice(grid ** dim, size=n, replace=False)
    pts = np.stack(np.unravel_index(cells, (grid,) * dim), axis=1).astype(float)
    D = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, D, id or f"euclid{n}")


def random_graph_metric(n: int, rng: np.random.Generator, max_weight: int = 5, p_edge: float = 0.5,
                        id: str | None = None) -> PointedMetricSpace:
    """Shortest-path metric of a connected random graph with integer weights.

    Integer weights make triangle equalities exact, which exercises the
    degenerate-triple handling.
    """
    W = np.full((n, n), np.inf)
    np.fill_diagonal(W, 0.0)
    order = rng.permutation(n)
    for a in range(1, n):  # random spanning tree keeps the graph connected
        u, v = order[a], order[rng.integers(0, a)]
        W[u, v] = W[v, u] = rng.integers(1, max_weight + 1)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                W[i, j] = W[j, i] = min(W[i, j], rng.integers(1, max_weight + 1))
    for k in range(n):
        W = np.minimum(W, W[:, k, None] + W[None, k, :])
    return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, W, id or f"graph{n}")


def random_space(n: int, rng: np.random.Generator, kind: str | None = None,
                 id: str | None = None) -> PointedMetricSpace:
    """Random space of the given kind, or a kind drawn uniformly."""
    kinds = ("ultrametric", "euclidean", "graph", "uniform")
    kind = kind or kinds[int(rng.integers(len(kinds)))]
    if kind == "ultrametric":
        return random_ultrametric(n, rng, id)
    if kind == "euclidean":
        return random_euclidean(n, rng, id=id)
    if kind == "graph":
        return random_graph_metric(n, rng, id=id)
    if kind == "uniform":
        # distances in [1, 2] always satisfy the triangle inequality strictly
        U = rng.uniform(1.0, 2.0, size=(n, n))
        D = np.triu(U, 1)
        D = D + D.T
        return PointedMetricSpace(tuple(str(i) for i in range(n)), 0, D, id or f"unif{n}")
    raise ValueError(f"unknown random space kind {kind!r}")
