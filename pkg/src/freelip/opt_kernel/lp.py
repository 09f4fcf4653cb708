"""Dense two-phase simplex with primal/dual certificates.

Problems are stated as::

    min / max  c @ x
    s.t.       A[i] @ x  (<= | == | >=)  b[i]
               lower <= x <= upper          (infinite bounds allowed)

and solved on a dense tableau.  Pricing is Dantzig's rule until the
objective stalls, after which Bland's rule takes over for the rest of the
solve, so the pivot sequence is fixed by the input.  The final basis is
re-factorized from the original data and every reported number is
recomputed from that factorization; residuals are checked before the
status ``optimal`` is returned.

Dual multipliers are shadow prices: ``duals[i]`` is the derivative of the
optimal value with respect to ``b[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical"

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
GAP_TOL = 1e-8


class LPError(ValueError):
    """Malformed linear program."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise LPError(f"constraint matrix has shape {A.shape}, expected (*, {n})")
        b = np.asarray(self.b, dtype=float).ravel()
        rel = tuple(self.relations)
        if b.size != A.shape[0] or len(rel) != A.shape[0]:
            raise LPError("constraint rows, relations and rhs differ in length")
        bad = [r for r in rel if r not in _RELATIONS]
        if bad:
            raise LPError(f"unknown relation {bad[0]!r}")
        lo = np.full(n, 0.0) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise LPError("bounds do not match the number of variables")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LPError("objective, matrix and rhs must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise LPError("invalid variable bounds")
        if self.sense not in ("min", "max"):
            raise LPError(f"unknown sense {self.sense!r}")
        for name, val in (("c", c), ("A", A), ("b", b), ("lower", lo), ("upper", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "relations", rel)

    @classmethod
    def build(cls, c, rows=(), bounds=None, sense="min"):
        """Assemble a program from ``(coeffs, relation, rhs)`` rows.

        ``bounds`` is a list of ``(lo, hi)`` pairs (``None`` means infinite)
        or ``None`` for ``x >= 0``.
        """
        c = np.asarray(c, dtype=float).ravel()
        rows = list(rows)
        A = np.array([np.asarray(r[0], dtype=float).ravel() for r in rows]).reshape(len(rows), c.size)
        rel = tuple(r[1] for r in rows)
        b = np.array([float(r[2]) for r in rows])
        if bounds is None:
            lo, hi = np.zeros(c.size), np.full(c.size, np.inf)
        else:
            lo = np.array([-np.inf if bd[0] is None else bd[0] for bd in bounds], dtype=float)
            hi = np.array([np.inf if bd[1] is None else bd[1] for bd in bounds], dtype=float)
        return cls(c, A, rel, b, lo, hi, sense)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def scale(self) -> float:
        vals = [np.abs(self.c).max(initial=0.0), np.abs(self.A).max(initial=0.0), np.abs(self.b).max(initial=0.0)]
        fin = np.concatenate([self.lower[np.isfinite(self.lower)], self.upper[np.isfinite(self.upper)]])
        vals.append(np.abs(fin).max(initial=0.0))
        return 1.0 + max(vals)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float | None = None
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    slackness_residual: float = math.inf
    iterations: int = 0
    farkas: np.ndarray | None = None
    ray: np.ndarray | None = None
    message: str = ""
    scale: float = 1.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def gap(self) -> float:
        if self.objective is None or self.dual_objective is None:
            return math.inf
        return abs(self.objective - self.dual_objective)


# ---------------------------------------------------------------------------
# certificates

def _min_costs(p: LinearProgram) -> np.ndarray:
    return p.c if p.sense == "min" else -p.c


def _row_sign_violation(p: LinearProgram, y_min: np.ndarray) -> np.ndarray:
    """Amount by which min-oriented multipliers have the wrong sign."""
    viol = np.zeros(p.m)
    rel = np.array(p.relations)
    le, ge = rel == LE, rel == GE
    viol[le] = np.maximum(y_min[le], 0.0)
    viol[ge] = np.maximum(-y_min[ge], 0.0)
    return viol


def _box_min(r: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """min over lo <= x <= hi of r*x, per coordinate; also infinite-direction violation."""
    val = np.zeros_like(r)
    viol = np.zeros_like(r)
    pos, neg = r > 0, r < 0
    fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
    val[pos & fin_lo] = r[pos & fin_lo] * lo[pos & fin_lo]
    viol[pos & ~fin_lo] = r[pos & ~fin_lo]
    val[neg & fin_hi] = r[neg & fin_hi] * hi[neg & fin_hi]
    viol[neg & ~fin_hi] = -r[neg & ~fin_hi]
    return val, viol


def dual_bound(p: LinearProgram, duals) -> tuple[float, float]:
    """Weak-duality bound on the optimal value implied by ``duals``.

    ``duals`` are shadow prices in the convention of :class:`LpSolution`.
    Multipliers with the wrong sign are clipped, and reduced costs pointing
    along an infinite bound are dropped; the size of those repairs is
    returned as the second element.  With zero residual the first element
    is a rigorous lower bound (``min``) or upper bound (``max``).
    """
    y = np.asarray(duals, dtype=float).ravel()
    y_min = y if p.sense == "min" else -y
    sign_viol = _row_sign_violation(p, y_min)
    rel = np.array(p.relations)
    y_clip = y_min.copy()
    y_clip[(rel == LE) & (y_clip > 0)] = 0.0
    y_clip[(rel == GE) & (y_clip < 0)] = 0.0
    r = _min_costs(p) - p.A.T @ y_clip
    box, box_viol = _box_min(r, p.lower, p.upper)
    bound = float(p.b @ y_clip + box.sum())
    resid = float(max(sign_viol.max(initial=0.0), box_viol.max(initial=0.0)))
    return (bound if p.sense == "min" else -bound), resid


def farkas_value(p: LinearProgram, y_min) -> tuple[float, float]:
    """Evaluate a Farkas certificate: positive value proves infeasibility.

    ``y_min`` are multipliers in min-orientation (``<=`` rows nonpositive,
    ``>=`` rows nonnegative).  The value is ``b@y + sum_j min_box(-(A^T y)_j x_j)``.
    """
    y = np.asarray(y_min, dtype=float).ravel()
    sign_viol = _row_sign_violation(p, y)
    box, box_viol = _box_min(-(p.A.T @ y), p.lower, p.upper)
    return float(p.b @ y + box.sum()), float(max(sign_viol.max(initial=0.0), box_viol.max(initial=0.0)))


def primal_residual(p: LinearProgram, x) -> float:
    x = np.asarray(x, dtype=float)
    ax = p.A @ x - p.b
    rel = np.array(p.relations)
    viol = np.zeros(p.m)
    viol[rel == LE] = np.maximum(ax[rel == LE], 0.0)
    viol[rel == GE] = np.maximum(-ax[rel == GE], 0.0)
    viol[rel == EQ] = np.abs(ax[rel == EQ])
    bnd = np.maximum(p.lower - x, 0.0).max(initial=0.0)
    bnd = max(bnd, np.maximum(x - p.upper, 0.0).max(initial=0.0))
    return float(max(viol.max(initial=0.0), bnd))


# ---------------------------------------------------------------------------
# standard form

@dataclass
class _Standard:
    A: np.ndarray  # rows x cols, b >= 0
    b: np.ndarray
    c: np.ndarray
    c0: float
    transform: np.ndarray  # x = offset + transform @ x_std[:n_struct]
    offset: np.ndarray
    n_struct: int
    flip: np.ndarray  # +1/-1 per row
    is_art: np.ndarray
    basis: np.ndarray
    m_orig: int
    ub_rows: list = field(default_factory=list)


def _standardize(p: LinearProgram) -> _Standard:
    n = p.n
    cols, offset, ub = [], np.zeros(n), []
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    T = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    A1 = p.A @ T
    b1 = p.b - p.A @ offset
    rel = list(p.relations)
    if ub:
        U = np.zeros((len(ub), ns))
        for r, (k, width) in enumerate(ub):
            U[r, k] = 1.0
        A1 = np.vstack([A1, U])
        b1 = np.concatenate([b1, [w for _, w in ub]])
        rel += [LE] * len(ub)
    m = A1.shape[0]
    n_slack = sum(1 for r in rel if r != EQ)
    S = np.zeros((m, n_slack))
    slack_of = np.full(m, -1)
    k = 0
    for i, r in enumerate(rel):
        if r == LE:
            S[i, k] = 1.0
        elif r == GE:
            S[i, k] = -1.0
        if r != EQ:
            slack_of[i] = ns + k
            k += 1
    M = np.hstack([A1, S])
    flip = np.where(b1 < 0, -1.0, 1.0)
    M *= flip[:, None]
    b1 = b1 * flip
    basis = np.full(m, -1)
    art_rows = []
    for i in range(m):
        s = slack_of[i]
        if s >= 0 and M[i, s] > 0:
            basis[i] = s
        else:
            art_rows.append(i)
    if art_rows:
        Art = np.zeros((m, len(art_rows)))
        for k, i in enumerate(art_rows):
            Art[i, k] = 1.0
            basis[i] = M.shape[1] + k
        M = np.hstack([M, Art])
    is_art = np.zeros(M.shape[1], dtype=bool)
    is_art[ns + n_slack:] = True
    cmin = _min_costs(p)
    c_std = np.zeros(M.shape[1])
    c_std[:ns] = cmin @ T
    return _Standard(M, b1, c_std, float(cmin @ offset), T, offset, ns, flip, is_art, basis, p.m, ub)


# ---------------------------------------------------------------------------
# tableau engine

_STALL_LIMIT = 30


def _pivot(tab: np.ndarray, r: int, j: int) -> None:
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    if nz.size:
        tab[nz] -= np.outer(col[nz], tab[r])


def _simplex(tab, basis, cost, allowed, is_art, tol, max_iter):
    """Run primal simplex on ``tab`` (last row holds reduced costs)."""
    m = tab.shape[0] - 1
    tab[-1, :-1] = cost - cost[basis] @ tab[:m, :-1]
    tab[-1, -1] = -cost[basis] @ tab[:m, -1]
    bland = False
    stall = 0
    best = -tab[-1, -1]
    for it in range(max_iter):
        d = tab[-1, :-1]
        cand = np.flatnonzero((d < -tol) & allowed)
        if cand.size == 0:
            return OPTIMAL, it, None
        j = cand[0] if bland else cand[np.argmin(d[cand])]
        col = tab[:m, j]
        art_rows = np.flatnonzero(is_art[basis] & (np.abs(col) > tol))
        if art_rows.size:
            r = art_rows[np.argmin(basis[art_rows])]
        else:
            pos = np.flatnonzero(col > tol)
            if pos.size == 0:
                return UNBOUNDED, it, j
            ratios = np.maximum(tab[pos, -1], 0.0) / col[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + tol * (1.0 + abs(rmin))]
            r = ties[np.argmin(basis[ties])]
        _pivot(tab, r, j)
        basis[r] = j
        if not bland:
            z = -tab[-1, -1]
            if z < best - tol:
                best, stall = z, 0
            else:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
    return NUMERICAL, max_iter, None


def _fresh_tableau(std: _Standard, basis: np.ndarray) -> np.ndarray:
    B = std.A[:, basis]
    body = np.linalg.solve(B, np.hstack([std.A, std.b[:, None]]))
    return np.vstack([body, np.zeros((1, body.shape[1]))])


def _dual_program(p: LinearProgram) -> LinearProgram | None:
    """The LP dual of ``p`` in min orientation, when every variable is free or
    bounded only from below.  Its shadow prices are the primal solution."""
    lo_fin = np.isfinite(p.lower)
    if np.any(np.isfinite(p.upper)):
        return None
    cmin = _min_costs(p)
    offset = np.where(lo_fin, p.lower, 0.0)
    b = p.b - p.A @ offset
    rel = np.array(p.relations)
    lower = np.where(rel == GE, 0.0, -np.inf)
    upper = np.where(rel == LE, 0.0, np.inf)
    row_rel = tuple(LE if f else EQ for f in lo_fin)
    return LinearProgram(b, p.A.T, row_rel, cmin, lower, upper, "max")


def _solve_via_dual(p: LinearProgram, max_iter: int | None) -> LpSolution | None:
    d = _dual_program(p)
    if d is None:
        return None
    ds = _lp_solve_direct(d, max_iter)
    if not ds.optimal:
        return None
    x = np.where(np.isfinite(p.lower), p.lower, 0.0) + ds.duals
    x = np.clip(x, p.lower, p.upper)
    sol = _certify(p, x, ds.x, p.scale)
    sol.iterations = ds.iterations
    return sol if sol.optimal else None


def lp_solve(p: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``p``; never reports ``optimal`` without verified certificates.

    Programs with many more rows than columns are first attempted through
    their dual, which gives a far smaller tableau; the recovered pair is
    certified against ``p`` itself, and any doubt falls back to the direct
    solve.
    """
    if p.m > 2 * (p.n + 1) and not np.any(p.lower > p.upper):
        sol = _solve_via_dual(p, max_iter)
        if sol is not None:
            return sol
    return _lp_solve_direct(p, max_iter)


def _lp_solve_direct(p: LinearProgram, max_iter: int | None = None) -> LpSolution:
    scale = p.scale
    if np.any(p.lower > p.upper):
        j = int(np.flatnonzero(p.lower > p.upper)[0])
        return LpSolution(INFEASIBLE, message=f"empty bounds for variable {j}", scale=scale)
    std = _standardize(p)
    m, N = std.A.shape
    tol = 1e-11 * scale
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    basis = std.basis.copy()
    tab = np.zeros((m + 1, N + 1))
    tab[:m, :N] = std.A
    tab[:m, -1] = std.b
    iters = 0

    if std.is_art.any():
        cost1 = std.is_art.astype(float)
        status, it, _ = _simplex(tab, basis, cost1, np.ones(N, dtype=bool), np.zeros(N, dtype=bool), tol, max_iter)
        iters += it
        if status == NUMERICAL:
            return LpSolution(NUMERICAL, iterations=iters, message="phase 1 iteration limit", scale=scale)
        B = std.A[:, basis]
        try:
            xb = np.linalg.solve(B, std.b)
            y1 = np.linalg.solve(B.T, cost1[basis])
        except np.linalg.LinAlgError:
            return LpSolution(NUMERICAL, iterations=iters, message="singular phase 1 basis", scale=scale)
        infeas = float(cost1[basis] @ xb)
        if infeas > PRIMAL_TOL * scale:
            y_min = (std.flip * y1)[: std.m_orig]
            return LpSolution(INFEASIBLE, iterations=iters, farkas=y_min, scale=scale,
                              message=f"phase 1 optimum {infeas:.3e}")

    allowed = ~std.is_art
    for attempt in range(3):
        status, it, entering = _simplex(tab, basis, std.c, allowed, std.is_art, tol, max_iter)
        iters += it
        if status == UNBOUNDED:
            ray_std = np.zeros(N)
            ray_std[entering] = 1.0
            ray_std[basis] -= tab[:m, entering]
            ray = std.transform @ ray_std[: std.n_struct]
            return LpSolution(UNBOUNDED, ray=ray, iterations=iters, scale=scale)
        if status == NUMERICAL:
            return LpSolution(NUMERICAL, iterations=iters, message="phase 2 iteration limit", scale=scale)
        sol = _extract(p, std, basis, scale)
        sol.iterations = iters
        if sol.status == OPTIMAL:
            return sol
        try:
            tab = _fresh_tableau(std, basis)
        except np.linalg.LinAlgError:
            break
    return LpSolution(NUMERICAL, iterations=iters, message="certificate residuals too large", scale=scale)


def _extract(p: LinearProgram, std: _Standard, basis: np.ndarray, scale: float) -> LpSolution:
    B = std.A[:, basis]
    try:
        xb = np.linalg.solve(B, std.b)
        y = np.linalg.solve(B.T, std.c[basis])
    except np.linalg.LinAlgError:
        return LpSolution(NUMERICAL, message="singular basis", scale=scale)
    x_std = np.zeros(std.A.shape[1])
    x_std[basis] = xb
    d = std.c - std.A.T @ y
    neg_x = max(0.0, -xb.min(initial=0.0))
    art_level = np.abs(x_std[std.is_art]).max(initial=0.0)
    neg_d = max(0.0, -d[~std.is_art].min(initial=0.0))
    if max(neg_x, art_level) > PRIMAL_TOL * scale or neg_d > DUAL_TOL * scale:
        return LpSolution(NUMERICAL, message="basis not optimal after refactorization", scale=scale)
    x = std.offset + std.transform @ np.maximum(x_std[: std.n_struct], 0.0)
    x = np.clip(x, p.lower, p.upper)
    y_min = (std.flip * y)[: std.m_orig]
    return _certify(p, x, y_min, scale)


def _certify(p: LinearProgram, x: np.ndarray, y_min: np.ndarray, scale: float) -> LpSolution:
    """Package a primal/dual pair, marking it optimal only if both check out."""
    duals = y_min if p.sense == "min" else -y_min
    obj = float(p.c @ x)
    dual_obj, dres = dual_bound(p, duals)
    r = _min_costs(p) - p.A.T @ y_min
    rel = np.array(p.relations)
    slack = p.A @ x - p.b
    cs_rows = np.abs(y_min * np.where(rel == EQ, 0.0, slack))
    dist_lo = np.where(np.isfinite(p.lower), x - p.lower, np.inf)
    dist_hi = np.where(np.isfinite(p.upper), p.upper - x, np.inf)
    with np.errstate(invalid="ignore"):
        cs_cols = np.where(r > 0, r * dist_lo, np.where(r < 0, -r * dist_hi, 0.0))
    cs_cols = np.where(np.isfinite(cs_cols), cs_cols, np.abs(r))
    sol = LpSolution(
        OPTIMAL,
        x=x,
        objective=obj,
        duals=duals,
        reduced_costs=r if p.sense == "min" else -r,
        dual_objective=dual_obj,
        primal_residual=primal_residual(p, x),
        dual_residual=dres,
        slackness_residual=float(max(cs_rows.max(initial=0.0), cs_cols.max(initial=0.0))),
        scale=scale,
    )
    if (
        sol.primal_residual > PRIMAL_TOL * scale
        or sol.dual_residual > DUAL_TOL * scale
        or sol.gap > GAP_TOL * scale
    ):
        sol.status = NUMERICAL
        sol.message = "certificate residuals too large"
    return sol
