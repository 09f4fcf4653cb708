"""Named reproductions run as falsifiable assertion suites.

Each experiment returns a :class:`Report`.  Every assertion carries either a
witness from which :func:`verify_report` recomputes its value without
solving anything, or the tag ``empirical``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math
import platform

import numpy as np

from ._parallel import parallel_map
from .bpb_engine import (
    LipschitzMap, approx_lp, best_attaining_approx, certified_lower_bound, lip_bpb_solve, lip_value,
    modulus_estimate, normalized,
)
from .exposing import alpha_witness
from .free_space import Molecule
from .io import space_from_dict, space_to_dict
from .metric_core import (
    PointedMetricSpace, analyze, holder_bound, line_space, random_space, random_ultrametric, snowflake,
    truncated_family,
)
from .normed_targets import NormSpec

CERTIFIED, EXACT, EMPIRICAL = "certified", "exact", "empirical"
THETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


class ExperimentError(ValueError):
    pass


@dataclass
class Assertion:
    name: str
    anchor: str
    relation: str               # ">=", "<=", "==", "<", ">"
    value: object
    threshold: object
    tag: str
    witness: dict | None = None
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return _compare(self.value, self.relation, self.threshold, self.tol)

    def to_dict(self) -> dict:
        v, t = self.value, self.threshold
        return {"name": self.name, "anchor": self.anchor, "relation": self.relation,
                "value": str(v) if isinstance(v, Fraction) else v,
                "threshold": str(t) if isinstance(t, Fraction) else t,
                "tol": self.tol, "tag": self.tag, "passed": self.passed, "witness": self.witness}


def _compare(v, rel, t, tol=0.0) -> bool:
    if v is None:
        return False
    if rel == ">=":
        return v >= t - tol
    if rel == "<=":
        return v <= t + tol
    if rel == ">":
        return v > t
    if rel == "<":
        return v < t
    if rel == "==":
        return abs(v - t) <= tol
    raise ValueError(rel)


@dataclass
class Report:
    experiment: str
    params: dict
    results: dict
    assertions: list
    csv: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "results": self.results,
                "assertions": [a.to_dict() for a in self.assertions], "passed": self.passed,
                "versions": versions(), "csv": self.csv}


def versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"freelip": pkg, "numpy": np.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------------------
# the maps behind the counterexamples

def example_n_values(labels, n: int) -> list[int]:
    """p - 1 up to 2n, p - 2 beyond: slope 1 everywhere except a flat step at 2n."""
    return [p - 1 if p <= 2 * n else p - 2 for p in (int(s) for s in labels)]


def example_n_map(M: PointedMetricSpace, n: int) -> LipschitzMap:
    return LipschitzMap.scalar(M, np.array(example_n_values(M.labels, n), dtype=float))


def quasibeta_images(k: int) -> list:
    """Images of 0, 1, 2 on the 3-point line, as exact fractions."""
    a = 1 - Fraction(1, k)
    return [(Fraction(0), Fraction(0)), (Fraction(1), -a), (Fraction(0), -2 * a)]


def quasibeta_map(M: PointedMetricSpace, k: int) -> LipschitzMap:
    return LipschitzMap(M, np.array([[float(v) for v in row] for row in quasibeta_images(k)]), NormSpec.yk(k))


def yk_norm_exact(k: int, v) -> Fraction:
    x, y = (Fraction(t) for t in v)
    return max(abs(x), abs(y) + abs(x) / k)


def _fr(x) -> str:
    return str(Fraction(x))


# ---------------------------------------------------------------------------
# witnesses

def approx_witness(F: LipschitzMap, results) -> dict:
    """Everything needed to rebuild the approximation LPs and re-evaluate their dual bounds."""
    M = F.space
    return {"kind": "approx_bounds", "space": space_to_dict(M), "target": F.target.to_dict(),
            "images": F.images.tolist(),
            "candidates": [{"u": [a.u.p, a.u.q],
                            "facets": [{"facet": r.facet.tolist(), "duals": r.sparse_duals()} for r in a.per_facet]}
                           for a in results]}


def _recheck_approx(w: dict) -> float:
    M = space_from_dict(w["space"])
    target = NormSpec.from_dict(w["target"])
    F = LipschitzMap(M, np.array(w["images"]), target)
    best = math.inf
    for c in w["candidates"]:
        u = Molecule(M, *c["u"])
        for fr in c["facets"]:
            lp = approx_lp(F, u, np.array(fr["facet"]))
            y = np.zeros(lp.m)
            for i, v in fr["duals"]:
                y[i] = v
            best = min(best, certified_lower_bound(F, lp, y))
    return best


def _recheck(w: dict):
    kind = w["kind"]
    if kind == "approx_bounds":
        return _recheck_approx(w)
    if kind == "molecule_ratio":
        return (Fraction(w["fp"]) - Fraction(w["fq"])) / Fraction(w["d"])
    if kind == "yk_slack":
        return 1 - yk_norm_exact(w["k"], [Fraction(t) for t in w["vector"]])
    if kind == "lip_norm":
        M = space_from_dict(w["space"])
        return lip_value(LipschitzMap(M, np.array(w["images"]), NormSpec.from_dict(w["target"])))
    if kind == "drift":
        M = space_from_dict(w["space"])
        return 1.0 - lip_value(LipschitzMap(M, np.array(w["images"]), NormSpec.from_dict(w["target"])))
    if kind == "holder_min":
        theta = w["theta"]
        return min(analyze(snowflake(space_from_dict(s), theta)).gromov_constant for s in w["spaces"])
    if kind == "gromov_constant":
        return analyze(space_from_dict(w["space"])).gromov_constant
    if kind == "alpha_rho":
        M = space_from_dict(w["space"])
        return _alpha_rho(M, w["gamma"], np.array(w["functionals"]))
    if kind == "ultrametric_slack":
        return min(_ultrametric_slack(space_from_dict(s)) for s in w["spaces"])
    raise ValueError(f"unknown witness kind {kind!r}")


def _alpha_rho(M: PointedMetricSpace, gamma, functionals: np.ndarray) -> float:
    """max |f_l(m)| over vertices m other than +-(the vertex of f_l); inf if some f_l is not 1-Lipschitz."""
    D = M.dist
    F = functionals
    iu = ~np.eye(M.n, dtype=bool)
    slopes = (F[:, :, None] - F[:, None, :])[:, iu] / D[iu]
    if slopes.max(initial=0.0) > 1.0 + 1e-9:
        return math.inf
    rho = 0.0
    for a, (p, q) in enumerate(gamma):
        for (r, s) in gamma:
            if (r, s) not in ((p, q), (q, p)):
                rho = max(rho, abs((F[a, r] - F[a, s]) / D[r, s]))
    return rho


def verify_report(report: dict) -> list[dict]:
    """Re-derive each assertion from its embedded witness; no optimization is re-run."""
    out = []
    for a in report.get("assertions", []):
        w = a.get("witness")
        row = {"name": a["name"], "stored_passed": a["passed"], "tag": a["tag"]}
        if a["tag"] == EMPIRICAL or not w:
            row.update(recomputed=None, passed=a["passed"], reproduced=True, note="empirical: stored bit")
        else:
            try:
                v = _recheck(w)
            except (ValueError, KeyError, TypeError, IndexError) as e:
                row.update(recomputed=None, passed=False, reproduced=False, note=f"witness rejected: {e}")
                out.append(row)
                continue
            t = a["threshold"]
            if isinstance(v, Fraction):
                t = Fraction(t)
            ok = _compare(v, a["relation"], t, a.get("tol", 0.0))
            row.update(recomputed=str(v) if isinstance(v, Fraction) else v, passed=ok, reproduced=ok == a["passed"])
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# experiments

def _candidate_rows(M, res) -> list:
    return [{"u": f"{M.labels[c.u.p]}-{M.labels[c.u.q]}", "dist_molecule": c.dist_molecule,
             "metric_quotient": c.metric_quotient, "best_dist": c.approx.dist, "lower_bound": c.approx.lower_bound,
             "primary": c.dist_molecule < res.eps} for c in res.candidates]


def example_n(N: int = 12, n: int = 3, eps: float = 0.45) -> Report:
    if n < 1 or 3 * n > N:
        raise ExperimentError(f"need 1 <= n and 3n <= N, got N={N}, n={n}")
    if not 0 < eps < 0.5:
        raise ExperimentError("eps must lie in (0, 1/2)")
    M = truncated_family("integer-line", N)
    vals = example_n_values(M.labels, n)
    F = example_n_map(M, n)
    m = Molecule.of(M, str(3 * n), str(n))
    jump = Molecule.of(M, str(2 * n + 1), str(2 * n))
    res = lip_bpb_solve(F, m, eps)
    prim = [c.approx for c in res.candidates if c.dist_molecule < eps]
    at_jump = best_attaining_approx(F, jump)
    exact = (Fraction(vals[m.p]) - Fraction(vals[m.q])) / Fraction(M.dist[m.p, m.q])
    A = [
        Assertion("value_at_m(3n,n)", "integer-line map: f(m(3n,n)) = 1 - 1/(2n)", "==", exact,
                  1 - Fraction(1, 2 * n), EXACT,
                  {"kind": "molecule_ratio", "fp": _fr(vals[m.p]), "fq": _fr(vals[m.q]), "d": _fr(M.dist[m.p, m.q])}),
        Assertion("lip_norm_one", "integer-line map has Lipschitz norm 1", "==", lip_value(F), 1.0, EXACT,
                  {"kind": "lip_norm", "space": space_to_dict(M), "target": F.target.to_dict(),
                   "images": F.images.tolist()}, 1e-12),
        Assertion("candidate_minima", "no attaining map within eps near m(3n,n): every candidate distance >= 1",
                  ">=", res.certified_min, 1.0 - 1e-6, CERTIFIED, approx_witness(F, prim)),
        Assertion("best_at_jump", "best attaining distance at m(2n+1,2n) is 1", ">=", at_jump.lower_bound,
                  1.0 - 1e-6, CERTIFIED, approx_witness(F, [at_jump])),
        Assertion("best_at_jump_attained", "the map p -> p - 1 attains at m(2n+1,2n) at distance 1", "<=",
                  at_jump.dist, 1.0 + 1e-6, EMPIRICAL),
        Assertion("no_solution_found", "exhaustive search finds no solution", "==", float(res.success), 0.0, EMPIRICAL),
    ]
    results = {"value_at_m": float(exact), "bpb": res.to_dict(), "best_at_jump": at_jump.to_dict()}
    rows = _candidate_rows(M, res)
    return Report("example-N", {"N": N, "n": n, "eps": eps}, results, A,
                  {"columns": ["u", "dist_molecule", "metric_quotient", "best_dist", "lower_bound", "primary"],
                   "rows": rows})


def parabola(N: int = 30, n: int = 5, eps: float = 0.3) -> Report:
    if n < 1 or 3 * n > N:
        raise ExperimentError(f"need 1 <= n and 3n <= N, got N={N}, n={n}")
    if not 0 < eps < 1 / 3:
        raise ExperimentError("eps must lie in (0, 1/3)")
    M = truncated_family("parabola", N)
    raw = LipschitzMap.scalar(M, np.array(example_n_values(M.labels, n), dtype=float))
    drift = 1.0 - lip_value(raw)
    F, _ = normalized(raw)
    m = Molecule.of(M, str(3 * n), str(n))
    res = lip_bpb_solve(F, m, eps)
    prim = [c.approx for c in res.candidates if c.dist_molecule < eps]
    thr = 0.5 - drift - 1e-6
    A = [
        Assertion("drift", "renormalization drift 1 - ||f||_L of the truncated map", "==", drift, drift, CERTIFIED,
                  {"kind": "drift", "space": space_to_dict(M), "target": raw.target.to_dict(),
                   "images": raw.images.tolist()}, 1e-12),
        Assertion("candidate_minima", "parabola map: every attaining map near m(3n,n) is at distance >= 1/2",
                  ">=", res.certified_min, thr, CERTIFIED, approx_witness(F, prim)),
        Assertion("no_solution_found", "exhaustive search finds no solution", "==", float(res.success), 0.0, EMPIRICAL),
    ]
    results = {"drift": drift, "value_at_m": float(F.at(m)[0]), "bpb": res.to_dict(), "threshold": thr}
    return Report("parabola", {"N": N, "n": n, "eps": eps}, results, A,
                  {"columns": ["u", "dist_molecule", "metric_quotient", "best_dist", "lower_bound", "primary"],
                   "rows": _candidate_rows(M, res)})


def quasibeta(k_list=(2, 4, 8, 16, 32), eps: float = 0.4) -> Report:
    ks = [int(k) for k in k_list]
    if not ks or min(ks) < 2:
        raise ExperimentError("every k must be an integer >= 2")
    if not 0 < eps < 0.5:
        raise ExperimentError("eps must lie in (0, 1/2)")
    M = line_space(3)
    m = Molecule(M, 0, 2)
    A, rows, per_k = [], [], {}

    def run(k):
        F = quasibeta_map(M, k)
        return F, best_attaining_approx(F, m), lip_bpb_solve(F, m, eps)

    for k, (F, best, res) in zip(ks, parallel_map(run, ks)):
        img = quasibeta_images(k)
        vec = [(img[0][i] - img[2][i]) / 2 for i in range(2)]
        slack = 1 - yk_norm_exact(k, vec)
        eta_upper = float(slack) if res.certified_failure else None
        A += [
            Assertion(f"slack_k{k}", "1 - ||F_k(m(0,2))|| = 1/k", "==", slack, Fraction(1, k), EXACT,
                      {"kind": "yk_slack", "k": k, "vector": [str(v) for v in vec]}),
            Assertion(f"lip_norm_k{k}", "F_k has Lipschitz norm 1", "==", lip_value(F), 1.0, EXACT,
                      {"kind": "lip_norm", "space": space_to_dict(M), "target": F.target.to_dict(),
                       "images": F.images.tolist()}, 1e-12),
            Assertion(f"best_dist_k{k}", "best attaining distance at m(0,2) is at least 1/2", ">=", best.lower_bound,
                      0.5 - 1e-6, CERTIFIED, approx_witness(F, [best])),
            Assertion(f"certified_failure_k{k}", "no attaining map within eps near m(0,2), so eta(eps) <= 1/k",
                      ">=", res.certified_min, eps, CERTIFIED,
                      approx_witness(F, [c.approx for c in res.candidates if c.dist_molecule < eps])),
        ]
        rows.append({"k": k, "slack": float(slack), "best_dist": best.dist, "lower_bound": best.lower_bound,
                     "eta_upper": eta_upper, "eps": eps})
        per_k[str(k)] = {"slack": str(slack), "best": best.to_dict(), "bpb": res.to_dict()}
    return Report("quasibeta", {"k_list": ks, "eps": eps}, {"per_k": per_k}, A,
                  {"columns": ["k", "eps", "slack", "best_dist", "lower_bound", "eta_upper"], "rows": rows})


def _seeded_rng(seed: int, s: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(s)])


def snowflake_sweep(thetas=THETA_GRID, seeds: int = 50, seed: int = 0, n_max: int = 8) -> Report:
    if seeds < 1 or n_max < 3:
        raise ExperimentError("need seeds >= 1 and n_max >= 3")
    ths = [float(t) for t in thetas]
    if any(not 0 < t < 1 for t in ths):
        raise ExperimentError("every theta must lie in (0, 1)")

    def gen(s):
        rng = _seeded_rng(seed, s)
        return random_space(int(rng.integers(3, n_max + 1)), rng)

    spaces = [gen(s) for s in range(seeds)]
    A, rows = [], []
    for th in ths:
        gcs = parallel_map(lambda M: analyze(snowflake(M, th)).gromov_constant, spaces)
        b = holder_bound(th)
        A.append(Assertion(f"holder_theta_{th:g}", "snowflake constant >= (2 - 2^theta)/2", ">=", min(gcs), b,
                           CERTIFIED, {"kind": "holder_min", "theta": th, "spaces": [space_to_dict(M) for M in spaces]},
                           1e-9))
        rows.append({"theta": th, "bound": b, "min_constant": min(gcs), "seeds": seeds})
    line = snowflake(line_space(3), 0.5)
    gc = analyze(line).gromov_constant
    A.append(Assertion("tightness_line3_half", "3-point line at theta = 1/2 meets the bound: 1 - sqrt(2)/2", "==",
                       gc, 1 - math.sqrt(2) / 2, CERTIFIED, {"kind": "gromov_constant", "space": space_to_dict(line)},
                       1e-12))
    return Report("snowflake-sweep", {"thetas": ths, "seeds": seeds, "seed": seed, "n_max": n_max},
                  {"rows": rows, "tight_constant": gc}, A,
                  {"columns": ["theta", "bound", "min_constant", "seeds"], "rows": rows})


def _ultrametric_slack(M: PointedMetricSpace) -> float:
    """min over triples of (x,y)_z - min(d(x,z), d(y,z))/2."""
    D = M.dist
    G = 0.5 * (D[:, None, :] + D[None, :, :] - D[:, :, None])
    lo = 0.5 * np.minimum(D[:, None, :], D[None, :, :])
    idx = np.arange(M.n)
    mask = (idx[:, None, None] != idx[None, :, None]) & (idx[:, None, None] != idx[None, None, :]) \
        & (idx[None, :, None] != idx[None, None, :])
    if not mask.any():
        return math.inf
    return float((G - lo)[mask].min())


def ultrametric_sweep(seeds: int = 100, seed: int = 0, n_max: int = 10) -> Report:
    if seeds < 1 or n_max < 3:
        raise ExperimentError("need seeds >= 1 and n_max >= 3")
    spaces = []
    for s in range(seeds):
        rng = _seeded_rng(seed, s)
        spaces.append(random_ultrametric(int(rng.integers(3, n_max + 1)), rng))
    slacks = [_ultrametric_slack(M) for M in spaces]
    rows = [{"seed": s, "n": M.n, "min_slack": sl, "ultrametric": analyze(M).ultrametric}
            for s, (M, sl) in enumerate(zip(spaces, slacks))]
    A = [Assertion("half_min_leg", "ultrametric: (x,y)_z >= min(d(x,z), d(y,z))/2 on every triple", ">=",
                   min(slacks), 0.0, CERTIFIED, {"kind": "ultrametric_slack", "spaces": [space_to_dict(M) for M in spaces]},
                   1e-12)]
    return Report("ultrametric-sweep", {"seeds": seeds, "seed": seed, "n_max": n_max}, {"min_slack": min(slacks)}, A,
                  {"columns": ["seed", "n", "min_slack", "ultrametric"], "rows": rows})


def alpha_finite(spaces: int = 20, seed: int = 0, eps_list=(0.2, 0.4), n_max: int = 6, samples: int = 8,
                 budget: int = 20000) -> Report:
    if spaces < 1 or not 3 <= n_max <= 10:
        raise ExperimentError("need spaces >= 1 and 3 <= n_max <= 10")
    if any(not 0 < e < 1 for e in eps_list):
        raise ExperimentError("every eps must lie in (0, 1)")
    A, rows = [], []
    for s in range(spaces):
        rng = _seeded_rng(seed, s)
        M = random_space(int(rng.integers(3, n_max + 1)), rng)
        aw = alpha_witness(M)
        A.append(Assertion(f"alpha_space{s}", "finite space: ball vertices with their exposing functionals are "
                           "separated (rho < 1)", "<", aw.rho, 1.0, CERTIFIED,
                           {"kind": "alpha_rho", "space": space_to_dict(M),
                            "gamma": [[g.p, g.q] for g in aw.gamma], "functionals": [f.tolist() for f in aw.functionals]}))
        A.append(Assertion(f"alpha_checks_space{s}", "exposing functionals are norm one, act as 1 on their vertex, "
                           "and every molecule decomposes", "==", float(aw.valid), 1.0, EMPIRICAL))
        for e in eps_list:
            est = modulus_estimate(M, NormSpec.scalar(), float(e), budget=budget, samples=samples,
                                   seed=int(rng.integers(2 ** 31)), witnesses=False)
            A.append(Assertion(f"eta_lower_space{s}_eps{e:g}", "finite space, scalar target: eta(eps) > 0", ">",
                               est.eta_lower if est.eta_lower is not None else 0.0, 0.0, EMPIRICAL))
            rows.append({"space": s, "n": M.n, "kind": M.id, "eps": e, "eta_lower": est.eta_lower,
                         "eta_upper": est.eta_upper, "solved": est.solved, "failed": est.failed,
                         "partial": est.partial, "alpha_rho": aw.rho, "delta_min": aw.delta_min})
    return Report("alpha-finite", {"spaces": spaces, "seed": seed, "eps_list": list(eps_list), "n_max": n_max,
                                   "samples": samples, "budget": budget}, {"rows": rows}, A,
                  {"columns": ["space", "n", "kind", "eps", "eta_lower", "eta_upper", "solved", "failed", "partial",
                               "alpha_rho", "delta_min"], "rows": rows})


EXPERIMENTS = {
    "example-N": example_n,
    "parabola": parabola,
    "quasibeta": quasibeta,
    "snowflake-sweep": snowflake_sweep,
    "ultrametric-sweep": ultrametric_sweep,
    "alpha-finite": alpha_finite,
}


def reproduce(name: str, **params) -> Report:
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ExperimentError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}") from None
    try:
        return fn(**params)
    except TypeError as e:
        raise ExperimentError(f"bad parameters for {name}: {e}") from None
