"""Vector-valued Lipschitz maps on finite spaces, norm attainment, and
constructive Bishop-Phelps-Bollobas perturbations.

Every construction returns its perturbed map together with the numbers
needed to re-check it: Lipschitz distances, the attaining molecule, and,
for failures, LP dual bounds that certify no attaining map exists nearby.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ._parallel import parallel_map
from .exposing import NotConcave, exposing_functional, exposure_delta
from .free_space import (
    FreeVector, Molecule, molecule_matrix, molecule_set, norm_value, same_space,
)
from .metric_core import PointedMetricSpace, analyze
from .normed_targets import (
    BetaWitness, NormSpec, QuasiBetaWitness, UnsupportedNorm, WitnessError, ball_description,
    dual_ball_vertices, dual_eval, norm_eval, norm_eval_many, norming_functional,
    validate_beta_witness, validate_quasi_beta,
)
from .opt_kernel import EQ, LE, LinearProgram, dual_bound, lp_solve

ATTAIN_TOL = 1e-9
NORM_TOL = 1e-8


class HypothesisNotMet(ValueError):
    """A construction's quantitative precondition fails; ``details`` has the numbers."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class ScalarSolverFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# maps

@dataclass(frozen=True, eq=False)
class LipschitzMap:
    space: PointedMetricSpace
    images: np.ndarray        # (n, d); row of the base point is zero
    target: NormSpec

    def __post_init__(self):
        Y = np.array(self.images, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape != (self.space.n, self.target.dim):
            raise ValueError(f"images have shape {Y.shape}, expected ({self.space.n}, {self.target.dim})")
        if not np.all(np.isfinite(Y)):
            raise ValueError("images must be finite")
        if np.any(Y[self.space.base] != 0.0):
            raise ValueError("the base point must map to 0")
        Y.setflags(write=False)
        object.__setattr__(self, "images", Y)

    @classmethod
    def scalar(cls, space: PointedMetricSpace, values) -> "LipschitzMap":
        v = np.asarray(values, dtype=float).ravel()
        return cls(space, (v - v[space.base])[:, None], NormSpec.scalar())

    @classmethod
    def from_dict(cls, space: PointedMetricSpace, target: NormSpec, images: dict) -> "LipschitzMap":
        Y = np.zeros((space.n, target.dim))
        for label, vec in images.items():
            i = space.index(label)
            vec = np.atleast_1d(np.asarray(vec, dtype=float))
            if vec.size != target.dim:
                raise ValueError(f"image of {label!r} has length {vec.size}, expected {target.dim}")
            if i == space.base and np.any(vec):
                raise ValueError("the base point must map to 0")
            Y[i] = vec
        return cls(space, Y, target)

    def to_dict(self) -> dict:
        return {"space": self.space.id, "target": self.target.to_dict(),
                "images": {self.space.labels[i]: [float(v) for v in row] for i, row in enumerate(self.images)
                           if i != self.space.base}}

    @property
    def values(self) -> np.ndarray:
        """Scalar values (only for 1-dimensional targets)."""
        return self.images[:, 0]

    def apply(self, x: FreeVector) -> np.ndarray:
        if not same_space(x.space, self.space):
            raise ValueError("free vector and map live on different spaces")
        return x.coeff @ self.images

    def at(self, m: Molecule) -> np.ndarray:
        """Image of a molecule."""
        return (self.images[m.p] - self.images[m.q]) / self.space.dist[m.p, m.q]

    def molecule_images(self) -> np.ndarray:
        _, rows = molecule_matrix(self.space)
        return rows @ self.images

    def compose(self, ystar) -> "LipschitzMap":
        """The scalar map y* o F."""
        return LipschitzMap.scalar(self.space, self.images @ np.asarray(ystar, dtype=float))

    def _like(self, Y) -> "LipschitzMap":
        return LipschitzMap(self.space, Y, self.target)

    def __sub__(self, other: "LipschitzMap") -> "LipschitzMap":
        return self._like(self.images - other.images)

    def __add__(self, other: "LipschitzMap") -> "LipschitzMap":
        return self._like(self.images + other.images)

    def __mul__(self, s: float) -> "LipschitzMap":
        return self._like(float(s) * self.images)

    __rmul__ = __mul__


@dataclass
class AttainmentReport:
    lip_norm: float
    attaining: list           # (p, q) ordered pairs
    values: np.ndarray        # norm of F^(m) per ordered molecule (molecule_matrix order)

    def to_dict(self, M: PointedMetricSpace) -> dict:
        lab = M.labels
        return {"lip_norm": self.lip_norm, "attaining": [[lab[p], lab[q]] for p, q in self.attaining]}


def lip_norm(F: LipschitzMap, tol: float = ATTAIN_TOL) -> AttainmentReport:
    pairs, _ = molecule_matrix(F.space)
    vals = norm_eval_many(F.target, F.molecule_images())
    top = float(vals.max())
    att = [(int(p), int(q)) for (p, q), v in zip(pairs, vals) if v >= top - tol]
    return AttainmentReport(top, att, vals)


def lip_value(F: LipschitzMap) -> float:
    return float(norm_eval_many(F.target, F.molecule_images()).max())


def lip_distance(F: LipschitzMap, G: LipschitzMap) -> float:
    return lip_value(F - G)


def linearize_apply(F: LipschitzMap, x: FreeVector) -> np.ndarray:
    return F.apply(x)


def normalized(F: LipschitzMap) -> tuple[LipschitzMap, float]:
    """F / ||F||_L and the original norm; zero maps are rejected."""
    s = lip_value(F)
    if s <= 0.0:
        raise ValueError("the zero map cannot be normalized")
    if s == 1.0:
        return F, 1.0
    return F * (1.0 / s), s


def metric_quotient(m: Molecule, u: Molecule) -> float:
    """(d(p,r) + d(q,s)) / d(p,q) for m = m(p,q), u = m(r,s)."""
    D = m.space.dist
    return float((D[m.p, u.p] + D[m.q, u.q]) / D[m.p, m.q])


# ---------------------------------------------------------------------------
# best attaining approximation

def _facets(target: NormSpec) -> np.ndarray:
    if not target.polyhedral:
        raise UnsupportedNorm(f"best attaining approximation needs a polyhedral target, got {target!r}")
    return ball_description(target).facets


def approx_lp(F: LipschitzMap, u: Molecule, zstar) -> LinearProgram:
    """min t over G (images of non-base points, free) and t >= 0 subject to
    ||G||_L <= 1, ||F - G||_L <= t and z*(G^(u)) = 1, all written facet-wise."""
    M = F.space
    n, d = M.n, F.target.dim
    Z = _facets(F.target)
    nb = [i for i in range(n) if i != M.base]
    col = {p: k for k, p in enumerate(nb)}
    nvar = len(nb) * d + 1
    ti = nvar - 1
    A_rows, b = [], []
    for a in range(n):
        for c in range(a + 1, n):
            dac = M.dist[a, c]
            dF = F.images[a] - F.images[c]
            for z in Z:
                row = np.zeros(nvar)
                if a in col:
                    row[col[a] * d:(col[a] + 1) * d] += z
                if c in col:
                    row[col[c] * d:(col[c] + 1) * d] -= z
                A_rows.append(row)                     # z.(G(a)-G(c)) <= d
                b.append(dac)
                row2 = -row
                row2[ti] = -dac                        # z.(dF - dG) <= t d
                A_rows.append(row2)
                b.append(-float(z @ dF))
    eq = np.zeros(nvar)
    z = np.asarray(zstar, dtype=float)
    if u.p in col:
        eq[col[u.p] * d:(col[u.p] + 1) * d] += z
    if u.q in col:
        eq[col[u.q] * d:(col[u.q] + 1) * d] -= z
    A_rows.append(eq)
    b.append(M.dist[u.p, u.q])
    rel = (LE,) * (len(b) - 1) + (EQ,)
    lo = np.full(nvar, -np.inf)
    hi = np.full(nvar, np.inf)
    lo[ti] = 0.0
    c = np.zeros(nvar)
    c[ti] = 1.0
    return LinearProgram(c, np.array(A_rows), rel, np.array(b), lo, hi, "min")


def certified_lower_bound(F: LipschitzMap, lp: LinearProgram, duals) -> float:
    """Weak-duality bound with every G coordinate boxed by its implied range.

    Since ||G||_L <= 1 and G(base) = 0, |G_i(p)| <= d(p, base) max_v |v_i|.
    Adding those redundant boxes does not change the optimum, and with all
    free columns bounded the dual bound needs no repair, so it is rigorous.
    """
    M = F.space
    V = ball_description(F.target).vertices
    vmax = np.abs(V).max(axis=0)
    nb = [i for i in range(M.n) if i != M.base]
    B = np.concatenate([M.dist[p, M.base] * vmax for p in nb])
    lo = lp.lower.copy()
    hi = lp.upper.copy()
    lo[:-1], hi[:-1] = -B, B
    boxed = LinearProgram(lp.c, lp.A, lp.relations, lp.b, lo, hi, lp.sense)
    return dual_bound(boxed, duals)[0]


def _images_from_x(F: LipschitzMap, x: np.ndarray) -> np.ndarray:
    M = F.space
    d = F.target.dim
    Y = np.zeros((M.n, d))
    nb = [i for i in range(M.n) if i != M.base]
    for k, p in enumerate(nb):
        Y[p] = x[k * d:(k + 1) * d]
    return Y


@dataclass
class FacetResult:
    facet: np.ndarray
    value: float
    lower_bound: float
    residual: float
    duals: np.ndarray
    images: np.ndarray

    def sparse_duals(self) -> list:
        return [[int(i), float(v)] for i, v in enumerate(self.duals) if v != 0.0]


@dataclass
class ApproxResult:
    u: Molecule
    dist: float               # min over facets of the LP optimum
    lower_bound: float        # certified: min over facets of the dual bound
    G: LipschitzMap
    facet: np.ndarray
    per_facet: list
    lp_solves: int

    def to_dict(self, with_duals: bool = False) -> dict:
        M = self.u.space
        out = {"u": [M.labels[self.u.p], M.labels[self.u.q]], "dist": self.dist, "lower_bound": self.lower_bound,
               "facet": self.facet.tolist(), "G": self.G.to_dict()}
        if with_duals:
            out["facets"] = [{"facet": r.facet.tolist(), "value": r.value, "lower_bound": r.lower_bound,
                              "duals": r.sparse_duals()} for r in self.per_facet]
        return out


def best_attaining_approx(F: LipschitzMap, u: Molecule, check_norm: bool = True) -> ApproxResult:
    """Smallest ||F - G||_L over G with ||G||_L = ||G^(u)|| = 1, by one LP per facet functional."""
    if check_norm:
        nf = lip_value(F)
        if abs(nf - 1.0) > 1e-9:
            raise HypothesisNotMet(f"map must have Lipschitz norm 1, got {nf:.12g}", lip_norm=nf)
    Z = _facets(F.target)
    results = []
    for z in Z:
        lp = approx_lp(F, u, z)
        sol = lp_solve(lp)
        if not sol.optimal:
            raise ArithmeticError(f"approximation LP ended with status {sol.status}: {sol.message}")
        lb = certified_lower_bound(F, lp, sol.duals)
        res = dual_bound(lp, sol.duals)[1]
        results.append(FacetResult(z.copy(), float(sol.objective), lb, res, sol.duals.copy(),
                                   _images_from_x(F, sol.x)))
    best = min(range(len(results)), key=lambda i: (results[i].value, i))
    r = results[best]
    G = LipschitzMap(F.space, r.images, F.target)
    return ApproxResult(u, r.value, min(x.lower_bound for x in results), G, r.facet, results, len(results))


# ---------------------------------------------------------------------------
# solutions

@dataclass
class BpbSolution:
    F: LipschitzMap
    m: Molecule
    G: LipschitzMap
    u: Molecule
    dist_map: float
    dist_molecule: float
    metric_quotient: float
    lip_norm_G: float
    attained_value: float     # ||G^(u)||
    method: str
    scale: float = 1.0        # original ||F||_L before normalization
    extra: dict = field(default_factory=dict)

    def verify(self, eps: float | None = None) -> dict:
        """Recompute every stored quantity from scratch."""
        ln = lip_value(self.G)
        au = norm_eval(self.G.target, self.G.at(self.u))
        dm = lip_distance(self.F, self.G)
        du = 0.0 if (self.u.p, self.u.q) == (self.m.p, self.m.q) else norm_value(self.m.vector - self.u.vector)
        checks = {
            "norm_one": abs(ln - 1.0) <= NORM_TOL,
            "attains_at_u": abs(au - 1.0) <= NORM_TOL,
            "dist_map_matches": abs(dm - self.dist_map) <= 1e-9,
            "dist_molecule_matches": abs(du - self.dist_molecule) <= 1e-9,
            "metric_quotient_nonnegative": self.metric_quotient >= 0.0,
        }
        if eps is not None:
            checks["dist_map_below_eps"] = dm < eps
            checks["dist_molecule_below_eps"] = du < eps
        return checks

    def to_dict(self) -> dict:
        lab = self.F.space.labels
        extra = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extra.items()}
        return {"method": self.method, "m": [lab[self.m.p], lab[self.m.q]], "u": [lab[self.u.p], lab[self.u.q]],
                "dist_map": self.dist_map, "dist_molecule": self.dist_molecule,
                "metric_quotient": self.metric_quotient, "lip_norm_G": self.lip_norm_G,
                "attained_value": self.attained_value, "scale": self.scale, "G": self.G.to_dict(), "extra": extra}


def _solution(F, m, G, u, method, scale=1.0, **extra) -> BpbSolution:
    du = 0.0 if (u.p, u.q) == (m.p, m.q) else norm_value(m.vector - u.vector)
    return BpbSolution(F, m, G, u, lip_distance(F, G), du, metric_quotient(m, u), lip_value(G),
                       norm_eval(G.target, G.at(u)), method, scale, extra)


@dataclass
class Candidate:
    u: Molecule
    dist_molecule: float
    metric_quotient: float
    approx: ApproxResult | None = None


@dataclass
class BpbResult:
    """Outcome of the exhaustive search: a solution or a certified failure."""

    success: bool
    eps: float
    solution: BpbSolution | None
    certified_failure: bool
    best_dist: float
    certified_min: float      # min over candidates of certified lower bounds
    candidates: list
    quotient_success: bool | None
    criteria_disagree: bool
    lp_solves: int
    scale: float

    def to_dict(self, with_duals: bool = False) -> dict:
        out = {"success": self.success, "certified_failure": self.certified_failure, "eps": self.eps,
               "best_dist": self.best_dist, "certified_min": self.certified_min,
               "quotient_success": self.quotient_success, "criteria_disagree": self.criteria_disagree,
               "lp_solves": self.lp_solves, "scale": self.scale,
               "candidates": [{"u": [c.u.space.labels[c.u.p], c.u.space.labels[c.u.q]],
                               "dist_molecule": c.dist_molecule, "metric_quotient": c.metric_quotient,
                               **({} if c.approx is None else
                                  {k: v for k, v in c.approx.to_dict(with_duals).items() if k not in ("u", "G")})}
                              for c in self.candidates]}
        if self.solution is not None:
            out["solution"] = self.solution.to_dict()
        return out


def lip_bpb_solve(F: LipschitzMap, m: Molecule, eps: float, quotient: bool = True) -> BpbResult:
    """Search every molecule u near m for an attaining map within eps of F.

    Candidates are the u with ||u - m|| < eps (primary criterion) and, when
    ``quotient`` is set, also those with metric quotient below eps.
    """
    F, scale = normalized(F)
    M = F.space
    cands = []
    for u in molecule_set(M):
        du = 0.0 if (u.p, u.q) == (m.p, m.q) else norm_value(m.vector - u.vector)
        mq = metric_quotient(m, u)
        if du < eps or (quotient and mq < eps):
            cands.append(Candidate(u, du, mq))
    approxes = parallel_map(lambda c: best_attaining_approx(F, c.u, check_norm=False), cands)
    for c, a in zip(cands, approxes):
        c.approx = a
    primary = [c for c in cands if c.dist_molecule < eps]
    solves = sum(a.lp_solves for a in approxes)
    best = min(primary, key=lambda c: (c.approx.dist, c.dist_molecule, c.u.p, c.u.q), default=None)
    best_dist = best.approx.dist if best is not None else math.inf
    certified_min = min((c.approx.lower_bound for c in primary), default=math.inf)
    success = best is not None and best_dist < eps
    sol = None
    if success:
        sol = _solution(F, m, best.approx.G, best.u, "exhaustive-lp", scale)
    qsucc = None
    disagree = False
    if quotient:
        qc = [c for c in cands if c.metric_quotient < eps]
        qsucc = any(c.approx.dist < eps for c in qc)
        disagree = qsucc != success
    return BpbResult(success, eps, sol, (not success) and certified_min >= eps, best_dist, certified_min,
                     cands, qsucc, disagree, solves, scale)


# ---------------------------------------------------------------------------
# constructive perturbations

def gromov_eta(eps: float, delta: float) -> float:
    """Largest admissible slack: (1+eps/4)(1-eta) > 1 + eps(1-delta)/4 iff eta below this."""
    return 1.0 - (1.0 + eps * (1.0 - delta) / 4.0) / (1.0 + eps / 4.0)


def _argmax_molecule(G: LipschitzMap) -> Molecule:
    rep = lip_norm(G, tol=0.0)
    vals = rep.values
    pairs, _ = molecule_matrix(G.space)
    k = int(np.argmax(vals))
    return Molecule(G.space, int(pairs[k, 0]), int(pairs[k, 1]))


def gromov_perturbation(F: LipschitzMap, m: Molecule, eps: float, delta: float | None = None) -> BpbSolution:
    """Rank-one push of F along F^(m) weighted by the exposing functional of m."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    M = F.space
    rep = analyze(M)
    if not rep.concave:
        raise NotConcave("space is not Gromov concave")
    F, scale = normalized(F)
    if delta is None:
        delta = exposure_delta(M, eps)
    if delta <= 0:
        raise HypothesisNotMet("no grid slice depth meets the diameter bound", eps=eps, delta=delta)
    eta = gromov_eta(eps, delta)
    Fm = F.at(m)
    nFm = norm_eval(F.target, Fm)
    slack = 1.0 - nFm
    if not slack < eta:
        raise HypothesisNotMet(f"hypothesis not met: slack {slack:.6g} >= eta {eta:.6g}", eta=eta, slack=slack,
                               delta=delta)
    fm = exposing_functional(m).f
    G0 = LipschitzMap(M, F.images + (eps / 4.0) * np.outer(fm, Fm), F.target)
    nG0 = lip_value(G0)
    G = G0 * (1.0 / nG0)
    interm = lip_distance(F, G)
    if abs(norm_eval(G.target, G.at(m)) - 1.0) <= ATTAIN_TOL:
        u = m
    else:
        u = _argmax_molecule(G)
        if u.evaluate(fm) < 0:
            u = -u
    action = u.evaluate(fm)
    if not action > 1.0 - delta:
        raise AssertionError(f"attaining molecule outside the slice: f_m(u) = {action:.12g}, delta = {delta}")
    return _solution(F, m, G, u, "gromov-perturbation", scale, delta=delta, eta=eta, slack=slack,
                     first_step=lip_distance(F, G0), intermediate=interm, slice_action=action)


def _gamma(eps1: float, rho: float) -> float:
    """Largest (eps1/2) 2^-j with 1 + rho(eps1/2 + g) < (1 + eps1/2)(1 - g), halved."""
    for j in range(0, 80):
        g = (eps1 / 2.0) * 2.0 ** -j
        if 1.0 + rho * (eps1 / 2.0 + g) < (1.0 + eps1 / 2.0) * (1.0 - g):
            return g / 2.0
    raise HypothesisNotMet("no admissible gamma", eps=eps1, rho=rho)


def _dual_norms(G: LipschitzMap, functionals: np.ndarray) -> np.ndarray:
    """||y* o G||_L for each row y*."""
    MI = G.molecule_images()
    return np.abs(MI @ functionals.T).max(axis=0)


def beta_transfer(F: LipschitzMap, m: Molecule, eps: float, w: BetaWitness | None = None,
                  scalar_solver=None) -> BpbSolution:
    """Lift a scalar solution along the witness pair best aligned with F^(m).

    The construction runs at eps1 = eps/2 so that after normalizing the
    perturbed map the distance to F stays below eps/2 + gamma.
    """
    F, scale = normalized(F)
    target = F.target
    if w is None:
        from .normed_targets import beta_witness
        w = beta_witness(target)
    errs = validate_beta_witness(target, w)
    if errs:
        raise WitnessError("witness invalid: " + "; ".join(errs))
    solver = scalar_solver or lip_bpb_solve
    eps1 = eps / 2.0
    gamma = _gamma(eps1, w.rho)
    acts = np.abs(w.functionals @ F.at(m))
    lam = int(np.argmax(acts))
    ys, y = w.functionals[lam], w.vectors[lam]
    h = F.compose(ys)
    c_h = lip_value(h)
    if c_h <= 0:
        raise HypothesisNotMet("selected functional annihilates F", lam=lam)
    scal = solver(h * (1.0 / c_h), m, gamma)
    if not scal.success:
        raise ScalarSolverFailure(f"scalar solver found no solution within gamma={gamma:.6g} "
                                  f"(best {scal.best_dist:.6g}, certified min {scal.certified_min:.6g})")
    g = scal.solution.G.values * c_h
    u = scal.solution.u
    hv = h.values
    G_raw = LipschitzMap(F.space, F.images + np.outer((1.0 + eps1 / 2.0) * g - hv, y), target)
    proj = G_raw.images @ ys
    dn = _dual_norms(G_raw, w.functionals)
    raw_dist = lip_distance(F, G_raw)
    nraw = lip_value(G_raw)
    G = G_raw * (1.0 / nraw)
    return _solution(
        F, m, G, u, "beta-transfer", scale, gamma=gamma, eps_construction=eps1, lam=lam, rho=w.rho,
        c_h=c_h, scalar_dist=scal.solution.dist_map,
        projection_residual=float(np.abs(proj - (1.0 + eps1 / 2.0) * g).max()),
        raw_dist=raw_dist, raw_norm=nraw, raw_bound=eps1 / 2.0 + gamma,
        dual_norm_at_lambda=float(dn[lam]), dual_norm_max=float(dn.max()),
    )


@dataclass
class DensityResult:
    G: LipschitzMap
    u: Molecule
    dist_map: float
    extreme: np.ndarray
    member: int
    gamma: float
    r: float
    checks: dict

    def to_dict(self) -> dict:
        lab = self.G.space.labels
        return {"u": [lab[self.u.p], lab[self.u.q]], "dist_map": self.dist_map, "extreme": self.extreme.tolist(),
                "member": self.member, "gamma": self.gamma, "r": self.r, "checks": self.checks,
                "G": self.G.to_dict()}


def quasi_beta_transfer(F: LipschitzMap, eps: float, w: QuasiBetaWitness) -> DensityResult:
    """Strongly attaining G within eps of F (no proximity to a prescribed molecule)."""
    F, _ = normalized(F)
    target = F.target
    errs = validate_quasi_beta(target, w)
    if errs:
        raise WitnessError("witness invalid: " + "; ".join(errs))
    E = dual_ball_vertices(target)
    en = _dual_norms(F, E)
    e = E[int(np.argmax(en))]
    idx, t = w.members(e)
    r = float(max(w.rho[i] for i in idx))
    eps1 = eps / 2.0
    gamma = _gamma(eps1, r)
    norms = _dual_norms(F, w.functionals[idx])
    j = int(np.argmax(norms))
    if not norms[j] > 1.0 - gamma:
        raise HypothesisNotMet("no member of the extreme cover is nearly norming", best=float(norms[j]), gamma=gamma)
    i1 = idx[j]
    ys, y1 = w.functionals[i1], w.sigma[i1]
    h = F.compose(ys)
    u = _argmax_molecule(h)
    G_raw = LipschitzMap(F.space, F.images + (eps1 / 2.0) * np.outer(h.values, y1), target)
    nraw = lip_value(G_raw)
    G = G_raw * (1.0 / nraw)
    dn = _dual_norms(G_raw, w.functionals)
    hn = lip_value(h)
    dist = lip_distance(F, G)
    checks = {
        "attains": abs(norm_eval(target, G.at(u)) - 1.0) <= NORM_TOL,
        "dist_below_eps": dist < eps,
        "dual_norm_identity": abs(float(dn[i1]) - (1.0 + eps1 / 2.0) * hn) <= 1e-9,
        "separation_chain": (1.0 + eps1 / 2.0) * hn > (1.0 + eps1 / 2.0) * (1.0 - gamma) > 1.0 + r * (eps1 / 2.0 + gamma),
    }
    return DensityResult(G, u, dist, e, int(i1), gamma, r, checks)


@dataclass
class ScalarProjection:
    g: LipschitzMap
    ystar: np.ndarray
    y0_action: float
    bound_terms: tuple        # (||g - y*(y0) f||, ||y*(y0) f - f||)
    dist: float
    checks: dict


def scalar_projection(G: LipschitzMap, u: Molecule, f_ref: LipschitzMap, y0, eps: float | None = None
                      ) -> ScalarProjection:
    """g = y* o G for a norming functional y* of G^(u)."""
    Gu = G.at(u)
    ng = lip_value(G)
    if abs(norm_eval(G.target, Gu) - ng) > NORM_TOL or abs(ng - 1.0) > NORM_TOL:
        raise HypothesisNotMet("G does not attain its norm 1 at u", norm=ng)
    ys = norming_functional(G.target, Gu)
    ys = ys / dual_eval(G.target, ys)
    g = G.compose(ys)
    y0 = np.asarray(y0, dtype=float)
    a = float(ys @ y0)
    t1 = lip_distance(g, f_ref * a)
    t2 = abs(1.0 - a) * lip_value(f_ref)
    dist = lip_distance(g, f_ref)
    checks = {
        "attains": abs(abs(float(u.evaluate(g.values))) - 1.0) <= NORM_TOL and abs(lip_value(g) - 1.0) <= NORM_TOL,
        "bound_chain": dist <= t1 + t2 + 1e-12,
    }
    if eps is not None:
        checks["y0_action"] = a >= 1.0 - eps / 2.0
    return ScalarProjection(g, ys, a, (t1, t2), dist, checks)


# ---------------------------------------------------------------------------
# modulus estimation

@dataclass
class ModulusEstimate:
    eps: float
    eta_lower: float | None
    eta_upper: float | None
    samples: int
    solved: int
    failed: int
    partial: bool
    lp_solves: int
    witnesses: list
    probes: list = field(default_factory=list)     # (slack, solved) for every query run

    def unsolved_below(self, eta: float | None = None) -> int:
        eta = self.eta_lower if eta is None else eta
        return 0 if eta is None else sum(1 for s, ok in self.probes if s < eta and not ok)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eta_lower": self.eta_lower, "eta_upper": self.eta_upper,
                "samples": self.samples, "solved": self.solved, "failed": self.failed, "partial": self.partial,
                "lp_solves": self.lp_solves, "witnesses": self.witnesses,
                "probes": [[s, ok] for s, ok in self.probes]}


def _slack(F: LipschitzMap, m: Molecule) -> float:
    return 1.0 - norm_eval(F.target, F.at(m)) / lip_value(F)


def query_with_slack(F: LipschitzMap, m: Molecule, slack: float, iters: int = 60) -> LipschitzMap:
    """Blend F toward a map attaining at m until the relative slack at m is about ``slack``."""
    Fm = F.at(m)
    nm = norm_eval(F.target, Fm)
    if nm > 0:
        y0 = Fm / nm
    else:
        y0 = ball_description(F.target).vertices[0] if F.target.polyhedral else np.eye(F.target.dim)[0]
    A = LipschitzMap(F.space, np.outer(m.potential(), y0), F.target)

    def blend(t):
        return LipschitzMap(F.space, (1 - t) * F.images + t * A.images, F.target)

    if _slack(F, m) <= slack:
        return normalized(F)[0]
    lo, hi = 0.0, 1.0            # slack(lo) > target >= slack(hi) = 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _slack(blend(mid), m) > slack:
            lo = mid
        else:
            hi = mid
    return normalized(blend(hi))[0]


def named_witnesses(M: PointedMetricSpace, target: NormSpec, eps: float) -> list:
    """Known failing (F, m) pairs for the spaces/targets they are defined on."""
    from .experiments import example_n_map, quasibeta_map
    out = []
    if target.variant == "yk" and M.n == 3 and np.allclose(M.dist, [[0, 1, 2], [1, 0, 1], [2, 1, 0]]) \
            and M.base == 0 and eps < 0.5:
        out.append(("quasibeta", quasibeta_map(M, target.k), Molecule(M, 0, 2)))
    if target.dim == 1 and M.id == "integer-line-12" and eps < 0.5:
        out.append(("example-N", example_n_map(M, 3), Molecule(M, 8, 2)))
    return out


def modulus_estimate(M: PointedMetricSpace, target: NormSpec, eps: float, budget: int = 20000,
                     samples: int = 40, seed: int = 0, witnesses: bool = True, refine: int = 10) -> ModulusEstimate:
    """Empirical lower and certified upper estimates of eta(eps).

    Every sampled (map, molecule) pair is bisected (``refine`` steps) for the
    largest slack at which it is still solvable; eta_lower is the smallest
    such threshold over the samples.  Pairs that never fail give no threshold;
    if no pair fails, eta_lower is the largest slack seen solved.
    """
    rng = np.random.default_rng(seed)
    mols = molecule_set(M)
    grid = np.geomspace(1e-4, eps, 12)
    solves = 0
    partial = False
    thresholds, censored, cert_slacks, probes = [], [], [], []
    wit = []
    for name, Fw, mw in (named_witnesses(M, target, eps) if witnesses else []):
        res = lip_bpb_solve(Fw, mw, eps)
        solves += res.lp_solves
        s = _slack(Fw, mw)
        if res.certified_failure:
            cert_slacks.append(s)
            wit.append({"kind": name, "slack": s, "certified_min": res.certified_min, "m": [mw.p, mw.q]})
    count = solved = failed = 0

    def probe(F0n, m, slack):
        nonlocal solves
        F = query_with_slack(F0n, m, slack)
        res = lip_bpb_solve(F, m, eps)
        solves += res.lp_solves
        sl = _slack(F, m)
        probes.append((sl, bool(res.success)))
        return F, res, sl

    for _ in range(samples):
        if solves >= budget:
            partial = True
            break
        Y = rng.normal(size=(M.n, target.dim))
        Y[M.base] = 0.0
        F0 = LipschitzMap(M, Y, target)
        if lip_value(F0) == 0:
            continue
        F0n = normalized(F0)[0]
        m = mols[int(rng.integers(len(mols)))]
        F, res, s = probe(F0n, m, float(grid[int(rng.integers(len(grid)))]))
        count += 1
        if res.success:
            solved += 1
            lo, hi = s, None
        else:
            failed += 1
            lo, hi = 0.0, s
            if res.certified_failure:
                cert_slacks.append(s)
                wit.append({"kind": "sampled", "slack": s, "certified_min": res.certified_min, "m": [m.p, m.q],
                            "images": F.images.tolist()})
        # bisect on the same pair for the largest slack that is still solvable;
        # pairs solvable up to the largest slack they can reach bound nothing
        if hi is None:
            _, r, top = probe(F0n, m, eps)
            if r.success:
                censored.append(max(lo, top))
                continue
            hi = eps
        for _ in range(refine):
            if solves >= budget:
                partial = True
                break
            mid = 0.5 * (lo + hi)
            _, r, sm = probe(F0n, m, mid)
            if r.success:
                lo = max(lo, sm, 0.0)
            else:
                hi = mid
        thresholds.append(lo)
    eta_upper = min(cert_slacks) if cert_slacks else None
    if thresholds:
        eta_lower = min(thresholds)
    else:
        eta_lower = max(censored) if censored else None
    if eta_lower is not None and eta_upper is not None:
        eta_lower = min(eta_lower, eta_upper)
    return ModulusEstimate(eps, eta_lower, eta_upper, count, solved, failed, partial, solves, wit, probes)
