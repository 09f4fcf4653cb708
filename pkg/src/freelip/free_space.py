"""Elements of the free space over a finite pointed metric space.

A :class:`FreeVector` stores one coefficient per point (the base entry is
always 0, since the base point evaluation is the zero vector).  Norms come
with transport certificates: a flow realising the minimal representation
cost and a 1-Lipschitz potential realising the same value on the dual side.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from .metric_core import PointedMetricSpace, analyze
from .opt_kernel import EQ, LE, FlowNetwork, LinearProgram, lp_solve, mcf_solve

LIP_TOL = 1e-9
GAP_TOL = 1e-8
RECON_TOL = 1e-9


class SpaceMismatch(ValueError):
    pass


class OutsideBall(ValueError):
    pass


def same_space(a: PointedMetricSpace, b: PointedMetricSpace) -> bool:
    if a is b:
        return True
    return (a.id == b.id and a.labels == b.labels and a.base == b.base
            and a.dist.shape == b.dist.shape and bool(np.array_equal(a.dist, b.dist)))


def _require_same(a, b):
    if not same_space(a, b):
        raise SpaceMismatch(f"elements live on different spaces ({a.id!r} vs {b.id!r})")


@dataclass(frozen=True, eq=False)
class FreeVector:
    space: PointedMetricSpace
    coeff: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeff, dtype=float).ravel()
        if c.size != self.space.n:
            raise ValueError(f"expected {self.space.n} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ValueError("free vector coefficients must be finite")
        c[self.space.base] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeff", c)

    @classmethod
    def from_dict(cls, space: PointedMetricSpace, coeff: dict) -> "FreeVector":
        c = np.zeros(space.n)
        for label, v in coeff.items():
            i = space.index(label)
            if i == space.base and float(v) != 0.0:
                raise ValueError("the base point carries no coefficient (it must be absent or 0)")
            c[i] = float(v)
        return cls(space, c)

    @classmethod
    def delta(cls, space: PointedMetricSpace, p) -> "FreeVector":
        c = np.zeros(space.n)
        c[space.index(p)] = 1.0
        return cls(space, c)

    @classmethod
    def zero(cls, space: PointedMetricSpace) -> "FreeVector":
        return cls(space, np.zeros(space.n))

    def to_dict(self) -> dict:
        return {self.space.labels[i]: float(v) for i, v in enumerate(self.coeff) if i != self.space.base and v != 0.0}

    def __add__(self, other: "FreeVector") -> "FreeVector":
        _require_same(self.space, other.space)
        return FreeVector(self.space, self.coeff + other.coeff)

    def __sub__(self, other: "FreeVector") -> "FreeVector":
        _require_same(self.space, other.space)
        return FreeVector(self.space, self.coeff - other.coeff)

    def __neg__(self) -> "FreeVector":
        return FreeVector(self.space, -self.coeff)

    def __mul__(self, s: float) -> "FreeVector":
        return FreeVector(self.space, float(s) * self.coeff)

    __rmul__ = __mul__

    def pair(self, f) -> float:
        """Action of a function on the points (given as an array of values)."""
        f = np.asarray(f, dtype=float)
        return float(self.coeff @ (f - f[self.space.base]))

    def is_zero(self) -> bool:
        return not np.any(self.coeff)


@dataclass(frozen=True)
class Molecule:
    """The normalized difference (delta_p - delta_q) / d(p, q); ``-m`` is the swapped pair."""

    space: PointedMetricSpace = field(compare=False, hash=False, repr=False)
    p: int
    q: int

    def __post_init__(self):
        if self.p == self.q:
            raise ValueError("a molecule needs two distinct points")
        if not (0 <= self.p < self.space.n and 0 <= self.q < self.space.n):
            raise ValueError("molecule endpoint out of range")

    @classmethod
    def of(cls, space: PointedMetricSpace, p, q) -> "Molecule":
        return cls(space, space.index(p), space.index(q))

    @property
    def vector(self) -> FreeVector:
        c = np.zeros(self.space.n)
        dpq = self.space.dist[self.p, self.q]
        c[self.p] += 1.0 / dpq
        c[self.q] -= 1.0 / dpq
        return FreeVector(self.space, c)

    def __neg__(self) -> "Molecule":
        return Molecule(self.space, self.q, self.p)

    def label(self) -> str:
        return f"m({self.space.labels[self.p]},{self.space.labels[self.q]})"

    def potential(self) -> np.ndarray:
        """Closed-form norming potential d(x, q) - d(base, q)."""
        D = self.space.dist
        return D[:, self.q] - D[self.space.base, self.q]

    def evaluate(self, f) -> float:
        """(f(p) - f(q)) / d(p, q)."""
        f = np.asarray(f, dtype=float)
        return float((f[self.p] - f[self.q]) / self.space.dist[self.p, self.q])


def molecule_set(M: PointedMetricSpace, ordered: bool = True) -> list[Molecule]:
    """All ordered molecules (p != q), or the canonical p < q half."""
    return [Molecule(M, p, q) for p in range(M.n) for q in range(M.n)
            if p != q and (ordered or p < q)]


@lru_cache(maxsize=256)
def molecule_matrix(M: PointedMetricSpace) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (p, q) of all ordered molecules and their coefficient rows."""
    pairs = np.array([(p, q) for p in range(M.n) for q in range(M.n) if p != q], dtype=int)
    rows = np.zeros((len(pairs), M.n))
    dpq = M.dist[pairs[:, 0], pairs[:, 1]]
    rows[np.arange(len(pairs)), pairs[:, 0]] = 1.0 / dpq
    rows[np.arange(len(pairs)), pairs[:, 1]] -= 1.0 / dpq
    rows[:, M.base] = 0.0
    pairs.setflags(write=False)
    rows.setflags(write=False)
    return pairs, rows


@dataclass
class NormCertificate:
    """Free norm with a primal flow and a dual 1-Lipschitz potential."""

    value: float
    primal: dict            # (p, q) -> nonnegative flow from p to q
    primal_value: float
    dual_potential: np.ndarray
    dual_value: float
    gap: float
    lipschitz_excess: float  # max over pairs of f(p) - f(q) - d(p, q)
    scale: float
    method: str

    @property
    def certified(self) -> bool:
        return self.gap <= GAP_TOL * self.scale and self.lipschitz_excess <= LIP_TOL * self.scale

    def to_dict(self, M: PointedMetricSpace | None = None) -> dict:
        lab = (lambda i: M.labels[i]) if M is not None else str
        return {
            "value": self.value,
            "primal": [[lab(p), lab(q), w] for (p, q), w in sorted(self.primal.items())],
            "primal_value": self.primal_value,
            "dual_potential": {lab(i): float(v) for i, v in enumerate(self.dual_potential)},
            "dual_value": self.dual_value,
            "gap": self.gap,
            "lipschitz_excess": self.lipschitz_excess,
            "method": self.method,
        }


def lipschitz_excess(M: PointedMetricSpace, f) -> float:
    """max_{p,q} f(p) - f(q) - d(p,q); nonpositive iff f is 1-Lipschitz."""
    f = np.asarray(f, dtype=float)
    return float((f[:, None] - f[None, :] - M.dist).max())


def potential_lp(M: PointedMetricSpace, coeff) -> LinearProgram:
    """max sum coeff(p) f(p) over f with f(p) - f(q) <= d(p,q), f(base) = 0."""
    n = M.n
    pairs, _ = molecule_matrix(M)
    A = np.zeros((len(pairs), n))
    A[np.arange(len(pairs)), pairs[:, 0]] = 1.0
    A[np.arange(len(pairs)), pairs[:, 1]] = -1.0
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo[M.base] = hi[M.base] = 0.0
    b = M.dist[pairs[:, 0], pairs[:, 1]]
    return LinearProgram(np.asarray(coeff, dtype=float), A, (LE,) * len(pairs), b, lo, hi, "max")


def free_norm(x: FreeVector, dual: str = "lp") -> NormCertificate:
    """Free norm of ``x`` certified from both sides.

    The primal is a min-cost flow on the complete graph with the base absorbing
    the imbalance.  ``dual="lp"`` solves the potential LP independently;
    ``dual="flow"`` reuses the flow solver's node potentials (still a
    feasible dual, so the certificate stays valid and is cheaper).
    """
    M = x.space
    n = M.n
    scale = M.scale
    if x.is_zero():
        return NormCertificate(0.0, {}, 0.0, np.zeros(n), 0.0, 0.0, lipschitz_excess(M, np.zeros(n)), scale, dual)
    supply = x.coeff.copy()
    supply[M.base] = -supply.sum()
    net = FlowNetwork.complete(M.dist, supply)
    res = mcf_solve(net)
    primal = {}
    for a in np.nonzero(res.flow > 0)[0]:
        key = (int(net.tails[a]), int(net.heads[a]))
        primal[key] = primal.get(key, 0.0) + float(res.flow[a])
    primal_value = float(sum(w * M.dist[p, q] for (p, q), w in primal.items()))
    if dual == "flow":
        f = res.potentials - res.potentials[M.base]
    elif dual == "lp":
        sol = lp_solve(potential_lp(M, x.coeff))
        if not sol.optimal:
            raise ArithmeticError(f"potential LP ended with status {sol.status}: {sol.message}")
        f = sol.x.copy()
    else:
        raise ValueError(f"unknown dual method {dual!r}")
    f[M.base] = 0.0
    dual_value = x.pair(f)
    value = primal_value
    return NormCertificate(value, primal, primal_value, f, dual_value, abs(primal_value - dual_value),
                           lipschitz_excess(M, f), scale, dual)


def norm_value(x: FreeVector) -> float:
    """Free norm without the LP dual (flow-potential certificate only)."""
    return free_norm(x, dual="flow").value


def molecule_certificate(m: Molecule) -> NormCertificate:
    """Norm-one certificate for a molecule without any solver."""
    M = m.space
    f = m.potential()
    x = m.vector
    dpq = M.dist[m.p, m.q]
    dual_value = x.pair(f)
    return NormCertificate(1.0, {(m.p, m.q): 1.0 / dpq}, 1.0, f, dual_value, abs(1.0 - dual_value),
                           lipschitz_excess(M, f), M.scale, "closed-form")


def molecule_distance(m1: Molecule, m2: Molecule, dual: str = "flow") -> float:
    _require_same(m1.space, m2.space)
    if (m1.p, m1.q) == (m2.p, m2.q):
        return 0.0
    return free_norm(m1.vector - m2.vector, dual=dual).value


# ---------------------------------------------------------------------------
# ball vertices and convex decompositions

def _vertex_pairs(M: PointedMetricSpace) -> list[tuple[int, int]]:
    rep = analyze(M)
    out = []
    for p in range(M.n):
        for q in range(M.n):
            if p != q and rep.concave_pairs[(min(p, q), max(p, q))]:
                out.append((p, q))
    return out


@lru_cache(maxsize=256)
def _ball_vertex_pairs(M: PointedMetricSpace) -> tuple:
    return tuple(_vertex_pairs(M))


def ball_vertices(M: PointedMetricSpace) -> list[Molecule]:
    """Molecules m(p,q) with d(p,q) < d(p,z) + d(z,q) for every other z, both signs."""
    return [Molecule(M, p, q) for p, q in _ball_vertex_pairs(M)]


@lru_cache(maxsize=256)
def vertex_matrix(M: PointedMetricSpace) -> np.ndarray:
    """Rows = coefficient vectors of ``ball_vertices(M)``, in the same order."""
    rows = np.array([Molecule(M, p, q).vector.coeff for p, q in _ball_vertex_pairs(M)])
    rows.setflags(write=False)
    return rows


@dataclass
class Decomposition:
    atoms: list            # list of (Molecule, weight), weight > 0
    total: float           # sum of weights = free norm of the input
    residual: float        # max coordinate reconstruction error

    @property
    def min_weight(self) -> float:
        return min((w for _, w in self.atoms), default=math.inf)

    def to_dict(self) -> dict:
        return {"atoms": [[m.space.labels[m.p], m.space.labels[m.q], w] for m, w in self.atoms],
                "total": self.total, "residual": self.residual}


def convex_decompose(x: FreeVector, tol: float = 1e-9) -> Decomposition:
    """Canonical decomposition of ``x`` over ball vertices.

    Stage one minimises the total weight (which equals the free norm).  Stage
    two fixes that total and minimises sum(k * w_k) over the vertex index k,
    so ties resolve toward earlier vertices.  The simplex returns a basic
    solution, hence at most dim + 1 atoms.
    """
    M = x.space
    V = vertex_matrix(M)
    keep = [i for i in range(M.n) if i != M.base]
    Vt = V[:, keep].T  # (n-1, |V|)
    target = x.coeff[keep]
    nv = V.shape[0]
    if x.is_zero():
        return Decomposition([], 0.0, 0.0)
    rows1 = [(Vt[i], EQ, target[i]) for i in range(len(keep))]
    s1 = lp_solve(LinearProgram.build(np.ones(nv), rows1))
    if not s1.optimal:
        raise ArithmeticError(f"decomposition LP ended with status {s1.status}")
    total = float(s1.objective)
    if total > 1.0 + tol:
        raise OutsideBall(f"outside ball: free norm {total:.12g} exceeds 1")
    rows2 = rows1 + [(np.ones(nv), EQ, total)]
    s2 = lp_solve(LinearProgram.build(np.arange(1, nv + 1, dtype=float), rows2))
    w = s2.x if s2.optimal else s1.x
    w = np.where(w > 1e-13, w, 0.0)
    pairs = _ball_vertex_pairs(M)
    atoms = [(Molecule(M, *pairs[k]), float(w[k])) for k in np.nonzero(w)[0]]
    recon = w @ V
    residual = float(np.abs(recon - x.coeff).max())
    return Decomposition(atoms, float(w.sum()), residual)
