"""Strongly exposing functionals, slices of the free-space ball and
separated biorthogonal systems built from ball vertices."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

from ._parallel import parallel_map
from .free_space import (
    Decomposition, FreeVector, Molecule, ball_vertices, convex_decompose, lipschitz_excess,
    molecule_matrix, molecule_set, norm_value, vertex_matrix, _ball_vertex_pairs,
)
from .metric_core import PointedMetricSpace, analyze
from .opt_kernel import EQ, LE, LinearProgram, lp_solve

MARGIN_TOL = 1e-9
EDGE_TOL = 1e-9
DYADIC_GRID = tuple(2.0 ** -j for j in range(1, 21))


class NotConcave(ValueError):
    pass


@dataclass
class ExposureCertificate:
    molecule: Molecule
    f: np.ndarray               # values per point, f(base) = 0
    margin: float               # optimal s of the margin LP
    rho_gap: float              # max f^(m') over m' not in {m, -m}; -inf with no competitors
    feasible: bool
    lipschitz_excess: float
    action: float               # f^(m)
    decomposition: Decomposition | None = None

    def to_dict(self) -> dict:
        M = self.molecule.space
        out = {"p": M.labels[self.molecule.p], "q": M.labels[self.molecule.q], "feasible": self.feasible,
               "rho_gap": self.rho_gap if math.isfinite(self.rho_gap) else "-inf", "margin": self.margin,
               "f": {M.labels[i]: float(v) for i, v in enumerate(self.f)}}
        if self.decomposition is not None:
            out["decomposition"] = self.decomposition.to_dict()
        return out


def exposure_lp(m: Molecule) -> LinearProgram:
    """max s : f(base)=0, f^(m)=1, f^(m') + s <= 1 for m' != +-m, 0 <= s <= 2.

    Variables are (f_0..f_{n-1}, s).  The margin rows already force f to be
    1-Lipschitz because s >= 0 and every ordered pair except +-m appears;
    the remaining pair is pinned by the equality row.
    """
    M = m.space
    n = M.n
    pairs, rows = molecule_matrix(M)
    other = ~(((pairs[:, 0] == m.p) & (pairs[:, 1] == m.q)) | ((pairs[:, 0] == m.q) & (pairs[:, 1] == m.p)))
    A = np.zeros((int(other.sum()) + 1, n + 1))
    dpq = M.dist[pairs[other, 0], pairs[other, 1]]
    k = np.arange(int(other.sum()))
    A[k, pairs[other, 0]] = 1.0 / dpq
    A[k, pairs[other, 1]] -= 1.0 / dpq
    A[k, n] = 1.0
    d = M.dist[m.p, m.q]
    A[-1, m.p] += 1.0 / d
    A[-1, m.q] -= 1.0 / d
    b = np.concatenate([np.ones(len(k)), [1.0]])
    rel = (LE,) * len(k) + (EQ,)
    lo = np.full(n + 1, -np.inf)
    hi = np.full(n + 1, np.inf)
    lo[M.base] = hi[M.base] = 0.0
    lo[n], hi[n] = 0.0, 2.0
    c = np.zeros(n + 1)
    c[n] = 1.0
    return LinearProgram(c, A, rel, b, lo, hi, "max")


def _rho_gap(m: Molecule, f: np.ndarray) -> float:
    pairs, rows = molecule_matrix(m.space)
    other = ~(((pairs[:, 0] == m.p) & (pairs[:, 1] == m.q)) | ((pairs[:, 0] == m.q) & (pairs[:, 1] == m.p)))
    if not other.any():
        return -math.inf
    return float((rows[other] @ f).max())


@lru_cache(maxsize=4096)
def _exposure(M: PointedMetricSpace, p: int, q: int) -> ExposureCertificate:
    m = Molecule(M, p, q)
    if M.n == 2:
        f = m.potential()
        return ExposureCertificate(m, f, math.inf, -math.inf, True, lipschitz_excess(M, f), m.evaluate(f))
    sol = lp_solve(exposure_lp(m))
    if not sol.optimal:
        raise ArithmeticError(f"exposure LP for {m.label()} ended with status {sol.status}")
    f = sol.x[:M.n].copy()
    f[M.base] = 0.0
    s = float(sol.x[M.n])
    feasible = s > MARGIN_TOL
    dec = None if feasible else convex_decompose(m.vector)
    return ExposureCertificate(m, f, s, _rho_gap(m, f), feasible, lipschitz_excess(M, f), m.evaluate(f), dec)


def exposing_functional(m: Molecule) -> ExposureCertificate:
    """Margin-maximal functional exposing ``m``; infeasible iff ``m`` is not a ball vertex."""
    return _exposure(m.space, m.p, m.q)


@dataclass
class RhoSeparation:
    per_molecule: dict          # (p, q) -> rho_gap
    max_rho: float
    non_vertices: list          # (p, q) pairs whose exposure LP is infeasible

    @property
    def separated(self) -> bool:
        return not self.non_vertices and self.max_rho < 1.0

    def to_dict(self, M: PointedMetricSpace) -> dict:
        lab = M.labels
        return {"max_rho": self.max_rho, "separated": self.separated,
                "non_vertices": [[lab[p], lab[q]] for p, q in self.non_vertices],
                "per_molecule": [{"p": lab[p], "q": lab[q], "rho_gap": r if math.isfinite(r) else "-inf"}
                                 for (p, q), r in sorted(self.per_molecule.items())]}


def rho_separation(M: PointedMetricSpace) -> RhoSeparation:
    certs = parallel_map(exposing_functional, molecule_set(M))
    per = {}
    bad = []
    for c in certs:
        key = (c.molecule.p, c.molecule.q)
        if c.feasible:
            per[key] = c.rho_gap
        else:
            bad.append(key)
    finite = [r for r in per.values() if math.isfinite(r)]
    return RhoSeparation(per, max(finite) if finite else 0.0, bad)


# ---------------------------------------------------------------------------
# edges of the ball polytope and slices

def _edge_value(V: np.ndarray, i: int, j: int) -> float:
    """min lam_i + lam_j over convex combinations of V equal to the midpoint of V_i, V_j."""
    nv, n = V.shape
    mid = 0.5 * (V[i] + V[j])
    cols = [c for c in range(n) if np.any(V[:, c])]
    rows = [(V[:, c], EQ, mid[c]) for c in cols] + [(np.ones(nv), EQ, 1.0)]
    c = np.zeros(nv)
    c[i] = c[j] = 1.0
    sol = lp_solve(LinearProgram.build(c, rows))
    if not sol.optimal:
        raise ArithmeticError(f"edge LP ended with status {sol.status}")
    return float(sol.objective)


@lru_cache(maxsize=64)
def ball_edges(M: PointedMetricSpace) -> tuple:
    """Index pairs (i, j), i < j, into ``ball_vertices(M)`` spanning edges of the ball.

    A pair is an edge iff every convex representation of its midpoint uses
    only the two endpoints.
    """
    V = vertex_matrix(M)
    pairs = _ball_vertex_pairs(M)
    dim = M.n - 1
    cand = [(i, j) for i in range(len(V)) for j in range(i + 1, len(V))
            if not (dim >= 2 and pairs[i] == pairs[j][::-1])]
    vals = parallel_map(lambda ij: _edge_value(V, *ij), cand)
    return tuple(ij for ij, v in zip(cand, vals) if v >= 1.0 - EDGE_TOL)


@dataclass
class SliceDiameterResult:
    f: np.ndarray
    delta: float
    diameter: float
    pair: tuple | None          # two coefficient arrays attaining the diameter
    method: str
    n_points: int

    def to_dict(self, M: PointedMetricSpace) -> dict:
        lab = M.labels
        pair = None if self.pair is None else [{lab[i]: float(v) for i, v in enumerate(a) if v} for a in self.pair]
        return {"delta": self.delta, "diameter": self.diameter, "method": self.method,
                "n_points": self.n_points, "pair": pair, "f": {lab[i]: float(v) for i, v in enumerate(self.f)}}


def _functional_norm(M: PointedMetricSpace, f: np.ndarray) -> float:
    _, rows = molecule_matrix(M)
    return float((rows @ f).max())


def _max_pair_distance(M: PointedMetricSpace, pts: list) -> tuple[float, tuple | None]:
    best, arg = 0.0, None
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            v = norm_value(FreeVector(M, pts[a] - pts[b]))
            if v > best:
                best, arg = v, (pts[a], pts[b])
    return best, arg


def slice_points(M: PointedMetricSpace, f, delta: float) -> list:
    """Vertices of the closed slice {x in B : f(x) >= 1 - delta} (empty if the open slice is)."""
    f = np.asarray(f, dtype=float)
    V = vertex_matrix(M)
    vals = V @ f
    lev = 1.0 - delta
    if vals.max() <= lev:
        return []
    pts = [V[i].copy() for i in range(len(V)) if vals[i] >= lev]
    for i, j in ball_edges(M):
        a, b = vals[i] - lev, vals[j] - lev
        if a * b < 0:
            t = a / (a - b)
            pts.append(V[i] + t * (V[j] - V[i]))
    return pts


def slice_diameter(M: PointedMetricSpace, f, delta: float, method: str = "exact") -> SliceDiameterResult:
    """Free-norm diameter of S(B, f, delta) = {x in B : f(x) > 1 - delta}."""
    f = np.asarray(f, dtype=float) - np.asarray(f, dtype=float)[M.base]
    if delta <= 0:
        raise ValueError("slice depth must be positive")
    if _functional_norm(M, f) > 1.0 + 1e-9:
        raise ValueError("functional norm exceeds 1")
    if method == "exact":
        pts = slice_points(M, f, delta)
    elif method == "molecule":
        _, rows = molecule_matrix(M)
        pts = [r.copy() for r in rows if r @ f > 1.0 - delta]
    else:
        raise ValueError(f"unknown slice method {method!r}")
    diam, pair = _max_pair_distance(M, pts)
    return SliceDiameterResult(f, float(delta), diam, pair, "exact-polytope" if method == "exact"
                               else "molecule-restricted", len(pts))


@lru_cache(maxsize=4096)
def _linear_regime(M: PointedMetricSpace, p: int, q: int) -> tuple[float, float]:
    """(C_m, 1 - rho_m): for delta < 1 - rho_m the exact slice diameter is C_m * delta."""
    cert = exposing_functional(Molecule(M, p, q))
    f = cert.f
    V = vertex_matrix(M)
    pairs = _ball_vertex_pairs(M)
    k = pairs.index((p, q))
    vals = V @ f
    others = [i for i in range(len(V)) if i != k]
    rho = max((vals[i] for i in others), default=-math.inf)
    nbrs = [j if i == k else i for i, j in ball_edges(M) if k in (i, j)]
    W = [(V[j] - V[k]) / (1.0 - vals[j]) for j in nbrs]
    c = max((norm_value(FreeVector(M, w)) for w in W), default=0.0)
    for a in range(len(W)):
        for b in range(a + 1, len(W)):
            c = max(c, norm_value(FreeVector(M, W[a] - W[b])))
    return c, (1.0 - rho) if math.isfinite(rho) else math.inf


def molecule_slice_diameter(m: Molecule, delta: float) -> float:
    """Exact diameter of the slice cut by the canonical exposing functional of ``m``."""
    c, lin = _linear_regime(m.space, m.p, m.q)
    if delta < lin:
        return c * delta
    return _slice_diam_cached(m.space, m.p, m.q, float(delta))


@lru_cache(maxsize=8192)
def _slice_diam_cached(M, p, q, delta):
    return slice_diameter(M, exposing_functional(Molecule(M, p, q)).f, delta).diameter


@dataclass
class ExposureProfile:
    table: list                 # [(eps, delta or 0.0)]
    slopes: dict                # (p, q) -> C_m
    grid: tuple

    def delta_for(self, eps: float) -> float:
        for e, d in self.table:
            if e == eps:
                return d
        raise KeyError(eps)

    def to_dict(self, M: PointedMetricSpace) -> dict:
        lab = M.labels
        return {"table": [{"eps": e, "delta": d} for e, d in self.table],
                "slopes": [{"p": lab[p], "q": lab[q], "C": c} for (p, q), c in sorted(self.slopes.items())]}


@lru_cache(maxsize=1024)
def exposure_delta(M: PointedMetricSpace, eps: float, grid=DYADIC_GRID) -> float:
    """Largest grid delta with every molecule's exact slice diameter below eps (0 if none)."""
    mols = molecule_set(M)
    for delta in sorted(grid, reverse=True):
        if all(molecule_slice_diameter(m, delta) < eps for m in mols):
            return float(delta)
    return 0.0


def uniform_exposure_profile(M: PointedMetricSpace, eps_grid, grid=DYADIC_GRID) -> ExposureProfile:
    rep = analyze(M)
    if not rep.concave:
        raise NotConcave("space is not Gromov concave: non-concave pairs "
                         + ", ".join(f"({M.labels[i]},{M.labels[j]})"
                                     for (i, j), ok in sorted(rep.concave_pairs.items()) if not ok))
    table = [(float(e), exposure_delta(M, e, grid)) for e in eps_grid]
    slopes = {(m.p, m.q): _linear_regime(M, m.p, m.q)[0] for m in molecule_set(M)}
    return ExposureProfile(table, slopes, tuple(grid))


# ---------------------------------------------------------------------------
# property alpha

@dataclass
class AlphaWitness:
    gamma: list                 # ball vertices as Molecules
    functionals: list           # exposing f per member of gamma
    rho: float
    delta_min: float
    decompositions: dict        # (p, q) -> Decomposition for every molecule
    checks: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        M = self.gamma[0].space
        lab = M.labels
        return {"gamma": [[lab[m.p], lab[m.q]] for m in self.gamma], "rho": self.rho,
                "delta_min": self.delta_min, "checks": self.checks,
                "functionals": [{lab[i]: float(v) for i, v in enumerate(f)} for f in self.functionals],
                "decompositions": {f"{lab[p]},{lab[q]}": d.to_dict() for (p, q), d in sorted(self.decompositions.items())}}


def alpha_witness(M: PointedMetricSpace, tol: float = 1e-9) -> AlphaWitness:
    gamma = ball_vertices(M)
    certs = parallel_map(exposing_functional, gamma)
    F = np.array([c.f for c in certs])
    X = vertex_matrix(M)
    act = F @ X.T                        # act[l, m] = x*_l(x_m)
    rho = 0.0
    for a, ma in enumerate(gamma):
        for b, mb in enumerate(gamma):
            if (ma.p, ma.q) != (mb.p, mb.q) and (ma.p, ma.q) != (mb.q, mb.p):
                rho = max(rho, abs(float(act[a, b])))
    decs = {}
    for m in molecule_set(M):
        decs[(m.p, m.q)] = convex_decompose(m.vector)
    delta_min = min(d.min_weight for d in decs.values())
    lip = max(c.lipschitz_excess for c in certs)
    checks = {
        "unit_actions": bool(np.all(np.abs(np.diag(act) - 1.0) <= tol)),
        "unit_functionals": bool(lip <= tol and all(abs(c.action - 1.0) <= tol for c in certs)),
        "separation_rho_below_one": rho < 1.0,
        "every_molecule_decomposes": all(d.residual <= tol and abs(d.total - 1.0) <= tol for d in decs.values()),
    }
    return AlphaWitness(gamma, [c.f for c in certs], rho, float(delta_min), decs, checks)
