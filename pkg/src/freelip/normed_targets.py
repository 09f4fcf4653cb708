"""Finite-dimensional target norms and biorthogonal witness systems.

Polyhedral balls are handled in both representations: ``facets`` are the
functionals g with B = {x : g.x <= 1 for all g}, ``vertices`` the extreme
points.  Conversion between them is brute force over d-subsets, which is
fine for the small dimensions used here.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
import math

import numpy as np

from .opt_kernel import EQ, LinearProgram, lp_solve

WITNESS_TOL = 1e-9



class NormError(ValueError):
    pass


class UnsupportedNorm(NormError):
    pass


def _frozen(a) -> np.ndarray | None:
    if a is None:
        return None
    arr = np.array(a, dtype=float)
    if arr.ndim != 2:
        raise NormError("facet/vertex lists must be 2-dimensional arrays")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NormSpec:
    variant: str
    dim: int
    p: float | None = None
    k: int | None = None
    facets: np.ndarray | None = None
    vertices: np.ndarray | None = None

    def __post_init__(self):
        v = self.variant
        if v not in ("lp", "linf", "l1", "polyhedral", "yk"):
            raise NormError(f"unknown norm variant {v!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise NormError(f"dimension must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if v == "lp":
            if self.p is None or not (self.p >= 1):
                raise NormError("lp norm needs p >= 1")
        if v == "yk":
            if self.k is None or int(self.k) != self.k or self.k < 2:
                raise NormError("yk norm needs an integer k >= 2")
            if self.dim != 2:
                raise NormError("yk norms live in dimension 2")
            object.__setattr__(self, "k", int(self.k))
        if v == "polyhedral":
            F, V = _frozen(self.facets), _frozen(self.vertices)
            if (F is None) == (V is None):
                raise NormError("polyhedral norm needs exactly one of facets or vertices")
            arr = F if F is not None else V
            if arr.shape[1] != self.dim:
                raise NormError(f"polyhedral data has width {arr.shape[1]}, expected {self.dim}")
            if not _is_symmetric(arr):
                raise NormError("polyhedral data must be symmetric (g in set implies -g in set)")
            if np.linalg.matrix_rank(arr) < self.dim:
                raise NormError("polyhedral data must span the space (bounded ball with interior)")
            object.__setattr__(self, "facets", F)
            object.__setattr__(self, "vertices", V)

    # constructors -----------------------------------------------------
    @classmethod
    def linf(cls, d: int = 1) -> "NormSpec":
        return cls("linf", d)

    @classmethod
    def l1(cls, d: int) -> "NormSpec":
        return cls("l1", d)

    @classmethod
    def lp(cls, p: float, d: int) -> "NormSpec":
        return cls("lp", d, p=float(p))

    @classmethod
    def yk(cls, k: int) -> "NormSpec":
        return cls("yk", 2, k=k)

    @classmethod
    def scalar(cls) -> "NormSpec":
        return cls("linf", 1)

    @classmethod
    def from_facets(cls, facets) -> "NormSpec":
        F = np.asarray(facets, dtype=float)
        return cls("polyhedral", F.shape[1], facets=F)

    @classmethod
    def from_vertices(cls, vertices) -> "NormSpec":
        V = np.asarray(vertices, dtype=float)
        return cls("polyhedral", V.shape[1], vertices=V)

    @property
    def polyhedral(self) -> bool:
        if self.variant == "lp":
            return self.p == 1 or math.isinf(self.p)
        return True

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "dim": self.dim}
        if self.p is not None:
            out["p"] = "inf" if math.isinf(self.p) else self.p
        if self.k is not None:
            out["k"] = self.k
        if self.facets is not None:
            out["facets"] = self.facets.tolist()
        if self.vertices is not None:
            out["vertices"] = self.vertices.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NormSpec":
        try:
            variant = d["variant"]
        except KeyError:
            raise NormError("norm spec lacks 'variant'") from None
        p = d.get("p")
        if isinstance(p, str):
            p = float(p)
        dim = d.get("dim")
        if dim is None:
            if variant == "yk":
                dim = 2
            elif d.get("facets") is not None:
                dim = len(d["facets"][0])
            elif d.get("vertices") is not None:
                dim = len(d["vertices"][0])
            else:
                raise NormError("norm spec lacks 'dim'")
        return cls(variant, dim, p=p, k=d.get("k"), facets=d.get("facets"), vertices=d.get("vertices"))

    def __repr__(self) -> str:
        extra = {"lp": f"p={self.p}", "yk": f"k={self.k}"}.get(self.variant, "")
        return f"NormSpec({self.variant}, dim={self.dim}{', ' + extra if extra else ''})"


def _is_symmetric(arr: np.ndarray, tol: float = 1e-12) -> bool:
    for row in arr:
        if np.abs(arr + row).max(axis=1).min() > tol * (1 + np.abs(row).max()):
            return False
    return True


def _dedup(rows, tol: float = 1e-10) -> np.ndarray:
    out: list[np.ndarray] = []
    for r in rows:
        if not any(np.abs(r - s).max() <= tol * (1 + np.abs(s).max()) for s in out):
            out.append(np.asarray(r, dtype=float))
    return np.array(out)


def _canonical_order(arr: np.ndarray) -> np.ndarray:
    """Sort rows lexicographically by (rounded) descending coordinates for stable output."""
    arr = arr + 0.0  # drop negative zeros
    key = np.round(arr, 12)
    order = np.lexsort(tuple(-key[:, j] for j in reversed(range(arr.shape[1]))))
    return arr[order]


def _vertices_from_facets(F: np.ndarray) -> np.ndarray:
    d = F.shape[1]
    pts = []
    for idx in combinations(range(len(F)), d):
        A = F[list(idx)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, np.ones(d))
        if (F @ x).max() <= 1 + 1e-9:
            pts.append(x)
    return _dedup(pts)


def _facets_from_vertices(V: np.ndarray) -> np.ndarray:
    d = V.shape[1]
    gs = []
    for idx in combinations(range(len(V)), d):
        A = V[list(idx)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        g = np.linalg.solve(A, np.ones(d))
        if (V @ g).max() <= 1 + 1e-9:
            gs.append(g)
    return _dedup(gs)


def _prune_facets(F: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Keep only functionals that touch the ball along a (d-1)-face."""
    d = F.shape[1]
    keep = []
    for g in F:
        vals = V @ g
        touch = V[vals >= 1 - 1e-9]
        if vals.max() >= 1 - 1e-9 and len(touch) and np.linalg.matrix_rank(touch, tol=1e-9) == d:
            keep.append(g)
    return np.array(keep)


def _prune_vertices(V: np.ndarray) -> np.ndarray:
    """Drop points that are convex combinations of the others (LP membership)."""
    keep = []
    for i in range(len(V)):
        others = np.delete(V, i, axis=0)
        if _gauge(others, V[i]) > 1 + 1e-9:
            keep.append(V[i])
    return np.array(keep)


@dataclass(frozen=True)
class BallDescription:
    vertices: np.ndarray
    facets: np.ndarray

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(), "facets": self.facets.tolist()}


@lru_cache(maxsize=128)
def _ball_description(spec: NormSpec) -> BallDescription:
    d = spec.dim
    v = spec.variant
    if v == "lp" and spec.p == 1:
        v = "l1"
    if v == "lp" and math.isinf(spec.p):
        v = "linf"
    if v == "linf":
        F = np.vstack([np.eye(d), -np.eye(d)])
        V = np.array(list(product((1.0, -1.0), repeat=d)))
    elif v == "l1":
        F = np.array(list(product((1.0, -1.0), repeat=d)))
        V = np.vstack([np.eye(d), -np.eye(d)])
    elif v == "yk":
        k = spec.k
        F = np.array([[1, 0], [-1, 0], [1 / k, 1], [-1 / k, -1], [-1 / k, 1], [1 / k, -1]], dtype=float)
        V = np.array([[0, 1], [0, -1], [1, 1 - 1 / k], [-1, -(1 - 1 / k)],
                      [-1, 1 - 1 / k], [1, -(1 - 1 / k)]], dtype=float)
    elif v == "polyhedral":
        if spec.facets is not None:
            V = _vertices_from_facets(spec.facets)
            F = _prune_facets(_dedup(spec.facets), V)
        else:
            V = _prune_vertices(_dedup(spec.vertices))
            F = _facets_from_vertices(V)
    else:
        raise UnsupportedNorm(f"{spec!r} is not polyhedral; no vertex/facet description")
    V, F = _canonical_order(V), _canonical_order(F)
    V.setflags(write=False)
    F.setflags(write=False)
    return BallDescription(V, F)


def ball_description(spec: NormSpec) -> BallDescription:
    """Both V- and H-representations of a polyhedral unit ball."""
    if not spec.polyhedral:
        raise UnsupportedNorm(f"{spec!r} is not polyhedral; no vertex/facet description")
    return _ball_description(spec)


def _check_dim(spec: NormSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != spec.dim:
        raise NormError(f"vector of length {v.shape[-1]} for a {spec.dim}-dimensional norm")
    return v


def _gauge(V: np.ndarray, x: np.ndarray) -> float:
    """Minkowski gauge of conv(V) (V symmetric) at x: min sum(lam), V^T lam = x."""
    if not np.any(x):
        return 0.0
    rows = [(V[:, j], EQ, x[j]) for j in range(V.shape[1])]
    sol = lp_solve(LinearProgram.build(np.ones(len(V)), rows))
    if sol.status == "infeasible":
        return math.inf
    if not sol.optimal:
        raise ArithmeticError(f"gauge LP ended with status {sol.status}")
    return float(sol.objective)


def norm_eval(spec: NormSpec, v) -> float:
    v = _check_dim(spec, v)
    var = spec.variant
    if var == "linf":
        return float(np.abs(v).max())
    if var == "l1":
        return float(np.abs(v).sum())
    if var == "lp":
        return float(np.linalg.norm(v, ord=spec.p))
    if var == "yk":
        x, y = v
        return float(max(abs(x), abs(y) + abs(x) / spec.k))
    if spec.facets is not None:
        return float(max((spec.facets @ v).max(), 0.0))
    return _gauge(spec.vertices, v)


def norm_eval_many(spec: NormSpec, vs) -> np.ndarray:
    """Row-wise norms of a (m, d) array."""
    vs = _check_dim(spec, np.atleast_2d(vs))
    var = spec.variant
    if var == "linf":
        return np.abs(vs).max(axis=1)
    if var == "l1":
        return np.abs(vs).sum(axis=1)
    if var == "lp":
        return np.linalg.norm(vs, ord=spec.p, axis=1)
    if var == "yk":
        return np.maximum(np.abs(vs[:, 0]), np.abs(vs[:, 1]) + np.abs(vs[:, 0]) / spec.k)
    F = ball_description(spec).facets
    return np.maximum((vs @ F.T).max(axis=1), 0.0)


def dual_eval(spec: NormSpec, f) -> float:
    """Dual norm: sup of <f, v> over the unit ball."""
    f = _check_dim(spec, f)
    var = spec.variant
    if var == "linf":
        return float(np.abs(f).sum())
    if var == "l1":
        return float(np.abs(f).max())
    if var == "lp":
        if spec.p == 1:
            return float(np.abs(f).max())
        if math.isinf(spec.p):
            return float(np.abs(f).sum())
        q = spec.p / (spec.p - 1.0)
        return float(np.linalg.norm(f, ord=q))
    V = ball_description(spec).vertices
    return float(max((V @ f).max(), 0.0))


def norming_functional(spec: NormSpec, v) -> np.ndarray:
    """A dual-unit functional y* with y*(v) = ||v|| (a facet for polyhedral norms)."""
    v = _check_dim(spec, v)
    if spec.polyhedral:
        F = ball_description(spec).facets
        return F[int(np.argmax(F @ v))].copy()
    nv = norm_eval(spec, v)
    if nv == 0:
        out = np.zeros(spec.dim)
        out[0] = 1.0
        return out
    p = spec.p
    return np.sign(v) * (np.abs(v) / nv) ** (p - 1)


def dual_ball_vertices(spec: NormSpec) -> np.ndarray:
    """Extreme points of the dual ball (the facet functionals)."""
    return ball_description(spec).facets


# ---------------------------------------------------------------------------
# witness systems

class WitnessError(ValueError):
    pass


@dataclass(frozen=True)
class BetaWitness:
    functionals: np.ndarray   # rows y*_lambda
    vectors: np.ndarray       # rows y_lambda
    rho: float

    @property
    def pairs(self) -> list:
        return list(zip(self.functionals, self.vectors))

    def to_dict(self) -> dict:
        return {"functionals": self.functionals.tolist(), "vectors": self.vectors.tolist(), "rho": self.rho}

    @classmethod
    def from_dict(cls, d: dict) -> "BetaWitness":
        return cls(np.asarray(d["functionals"], dtype=float), np.asarray(d["vectors"], dtype=float), float(d["rho"]))


def cross_rho(functionals: np.ndarray, vectors: np.ndarray) -> float:
    """max |y*_l(y_m)| over l != m (0 for a single pair)."""
    C = np.abs(functionals @ vectors.T)
    np.fill_diagonal(C, -np.inf)
    return float(max(C.max(initial=-np.inf), 0.0)) if len(C) > 1 else 0.0


def validate_beta_witness(spec: NormSpec, w: BetaWitness, n_probe: int = 200, tol: float = WITNESS_TOL) -> list[str]:
    """Return the violated witness conditions (empty when valid)."""
    errs = []
    if len(w.functionals) != len(w.vectors) or len(w.functionals) == 0:
        return ["functionals and vectors must be nonempty and of equal count"]
    if not 0 <= w.rho < 1:
        errs.append(f"rho={w.rho} not in [0,1)")
    for i, (ys, y) in enumerate(w.pairs):
        a, b, c = dual_eval(spec, ys), norm_eval(spec, y), float(ys @ y)
        if max(abs(a - 1), abs(b - 1), abs(c - 1)) > tol:
            errs.append(f"pair {i}: dual norm {a:.12g}, norm {b:.12g}, action {c:.12g} (all must be 1)")
    r = cross_rho(w.functionals, w.vectors)
    if r > w.rho + tol:
        errs.append(f"cross action {r:.12g} exceeds rho {w.rho:.12g}")
    rng = np.random.default_rng(12345)
    probes = np.vstack([np.eye(spec.dim), rng.normal(size=(n_probe, spec.dim))])
    for y in probes:
        sup = float(np.abs(w.functionals @ y).max())
        nv = norm_eval(spec, y)
        if abs(sup - nv) > tol * (1 + nv):
            errs.append(f"norming fails at probe {np.round(y, 6).tolist()}: sup {sup:.12g} vs norm {nv:.12g}")
            break
    return errs


def _sign_representatives(F: np.ndarray) -> list[int]:
    reps = []
    for i, g in enumerate(F):
        nz = np.nonzero(np.abs(g) > 1e-12)[0]
        if len(nz) and g[nz[0]] > 0:
            reps.append(i)
    return reps


def beta_witness(spec: NormSpec) -> BetaWitness:
    """One pair per facet up to sign: the facet functional and the centroid of its vertices."""
    if not spec.polyhedral:
        raise UnsupportedNorm(f"no witness extracted: {spec!r} is not polyhedral")
    desc = ball_description(spec)
    V, F = desc.vertices, desc.facets
    fs, vs = [], []
    for i in _sign_representatives(F):
        g = F[i]
        touch = V[V @ g >= 1 - 1e-9]
        fs.append(g)
        vs.append(touch.mean(axis=0))
    fs_arr, vs_arr = np.array(fs), np.array(vs)
    w = BetaWitness(fs_arr, vs_arr, cross_rho(fs_arr, vs_arr))
    errs = validate_beta_witness(spec, w)
    if errs:
        raise WitnessError("extracted witness failed validation: " + "; ".join(errs))
    return w


@dataclass(frozen=True)
class QuasiBetaWitness:
    """User-supplied quasi-beta data.

    ``cover`` lists, for each extreme dual point e*, the indices A_{e*} into
    ``functionals`` and the sign t with t*e* expected among those members.
    """

    functionals: np.ndarray        # A
    sigma: np.ndarray              # sigma(y*) per member of A
    rho: np.ndarray                # rho(y*) per member of A
    cover: tuple                   # ((e_star, (indices...), t), ...)

    @classmethod
    def from_beta(cls, spec: NormSpec, w: BetaWitness) -> "QuasiBetaWitness":
        cover = []
        for e in dual_ball_vertices(spec):
            hit = None
            for i, ys in enumerate(w.functionals):
                for t in (1.0, -1.0):
                    if np.abs(t * e - ys).max() <= 1e-9:
                        hit = (i, t)
                        break
                if hit:
                    break
            if hit is None:
                raise WitnessError("beta witness does not cover every extreme dual point")
            cover.append((tuple(float(v) for v in e), (hit[0],), hit[1]))
        return cls(w.functionals.copy(), w.vectors.copy(), np.full(len(w.functionals), w.rho), tuple(cover))

    def members(self, e_star) -> tuple[list[int], float]:
        e_star = np.asarray(e_star, dtype=float)
        for e, idx, t in self.cover:
            if np.abs(np.asarray(e) - e_star).max() <= 1e-9:
                return list(idx), t
        raise KeyError("extreme point not covered")

    def to_dict(self) -> dict:
        return {"functionals": self.functionals.tolist(), "sigma": self.sigma.tolist(), "rho": self.rho.tolist(),
                "cover": [{"extreme": list(e), "members": list(idx), "t": t} for e, idx, t in self.cover]}

    @classmethod
    def from_dict(cls, d: dict) -> "QuasiBetaWitness":
        cover = tuple((tuple(float(v) for v in c["extreme"]), tuple(int(i) for i in c["members"]), float(c["t"]))
                      for c in d["cover"])
        return cls(np.asarray(d["functionals"], dtype=float), np.asarray(d["sigma"], dtype=float),
                   np.asarray(d["rho"], dtype=float), cover)


def validate_quasi_beta(spec: NormSpec, w: QuasiBetaWitness, tol: float = WITNESS_TOL) -> list[str]:
    errs = []
    A, S, R = w.functionals, w.sigma, w.rho
    if not (len(A) == len(S) == len(R)) or len(A) == 0:
        return ["functionals, sigma and rho must be nonempty and of equal count"]
    for i in range(len(A)):
        if abs(dual_eval(spec, A[i]) - 1) > tol:
            errs.append(f"member {i} is not a dual unit vector")
        if abs(norm_eval(spec, S[i]) - 1) > tol or abs(A[i] @ S[i] - 1) > tol:
            errs.append(f"member {i}: sigma is not a unit vector normed by its functional")
        if not 0 <= R[i] < 1:
            errs.append(f"member {i}: rho {R[i]} not in [0,1)")
        for j in range(len(A)):
            if j != i and abs(A[j] @ S[i]) > R[i] + tol:
                errs.append(f"member {j} acts on sigma({i}) with {abs(A[j] @ S[i]):.6g} > rho {R[i]:.6g}")
    for e in dual_ball_vertices(spec):
        try:
            idx, t = w.members(e)
        except KeyError:
            errs.append(f"extreme dual point {np.round(e, 6).tolist()} has no cover entry")
            continue
        if t not in (1.0, -1.0):
            errs.append(f"cover sign {t} is not +-1")
        if not idx or max(R[i] for i in idx) >= 1:
            errs.append(f"cover of {np.round(e, 6).tolist()} has sup rho >= 1")
        if not any(np.abs(t * e - A[i]).max() <= tol for i in idx):
            errs.append(f"t*e* not among the cover members for {np.round(e, 6).tolist()}")
    return errs
