"""Command-line interface: ``freelip <command> ...``.

Exit codes: 0 success, 1 a checked assertion failed (or a construction's
hypothesis was not met), 2 bad usage or unreadable input.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path


from . import bpb_engine as bpb
from .exposing import NotConcave, alpha_witness, exposing_functional, rho_separation, uniform_exposure_profile
from .experiments import EXPERIMENTS, ExperimentError, reproduce, verify_report, versions
from .free_space import Molecule, convex_decompose, free_norm, molecule_set
from .io import (
    InputError, dumps, load_json, load_map, load_space, load_vector, normspec_from_any, space_to_dict, write_csv,
    write_json,
)
from .metric_core import MetricError, TRIANGLE_TOL, analyze, check_axioms, holder_bound_check, snowflake
from .normed_targets import BetaWitness, NormError, WitnessError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEEDED = ("snowflake-sweep", "ultrametric-sweep", "alpha-finite")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser, top: bool) -> None:
    """Global flags are accepted before or after the subcommand."""
    d = {} if top else {"default": argparse.SUPPRESS}
    p.add_argument("--tol", type=float, help="triangle-inequality tolerance for input spaces",
                   **({"default": TRIANGLE_TOL} if top else d))
    p.add_argument("--seed", type=int, help="seed for randomized commands", **({"default": None} if top else d))
    p.add_argument("--out", help="directory for report.json and CSV files", **({"default": None} if top else d))
    p.add_argument("--format", choices=("json", "csv"), help="stdout format",
                   **({"default": "json"} if top else d))


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="freelip", description="Exact computations on finite pointed metric spaces.")
    _global_flags(top, True)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_, space=True):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, False)
        if space:
            p.add_argument("--space", required=True, help="metric space JSON or CSV")
            p.add_argument("--base", help="base point label (overrides the file)")
        return p

    cmd("validate", "check the metric axioms")
    cmd("analyze", "concavity, ultrametricity and Gromov constant")
    p = cmd("snowflake", "raise distances to a power and check the Hoelder bound")
    p.add_argument("--theta", type=float, required=True)
    p = cmd("norm", "free-space norm with primal/dual certificate")
    p.add_argument("--vector", required=True)
    p.add_argument("--dual", choices=("lp", "flow"), default="lp")
    p.add_argument("--decompose", action="store_true", help="also decompose x/||x|| into molecules")
    p = cmd("lipnorm", "Lipschitz norm and attaining molecules of a map")
    p.add_argument("--map", required=True)
    p.add_argument("--target", help="override the map's target norm (e.g. linf:2, yk:4)")
    p = cmd("expose", "exposing functionals, separation and slice profile")
    p.add_argument("--molecule", help="restrict to one molecule p,q")
    p.add_argument("--eps", type=float, nargs="*", default=[], help="eps values for the uniform slice profile")
    cmd("alpha", "separated biorthogonal system from ball vertices")

    p = sub.add_parser("bpb", help="norm-attainment perturbations")
    _global_flags(p, False)
    bsub = p.add_subparsers(dest="bpb_command", required=True, parser_class=_Parser)
    for name, help_ in (("solve", "exhaustive LP search (solution or certified failure)"),
                        ("gromov", "rank-one perturbation on Gromov concave spaces"),
                        ("beta", "lift a scalar solution through a property-beta witness")):
        q = bsub.add_parser(name, help=help_)
        _global_flags(q, False)
        q.add_argument("--space", required=True)
        q.add_argument("--base")
        q.add_argument("--map", required=True)
        q.add_argument("--target")
        q.add_argument("--molecule", required=True, help="p,q")
        q.add_argument("--eps", type=float, required=True)
        if name == "beta":
            q.add_argument("--witness", help="BetaWitness JSON (extracted from the ball if omitted)")

    p = cmd("modulus", "estimate eta(eps) by sampled queries")
    p.add_argument("--target", default="scalar")
    p.add_argument("--eps", type=float, nargs="+", required=True)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--budget", type=int, default=20000, help="maximum number of LP solves per eps")

    p = sub.add_parser("reproduce", help="run a named experiment as an assertion suite")
    _global_flags(p, False)
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="experiment parameter; VALUE is parsed as JSON when possible")

    p = sub.add_parser("verify", help="re-check a report from its embedded witnesses")
    _global_flags(p, False)
    p.add_argument("report")
    return top


# ---------------------------------------------------------------------------

def _space(a):
    return load_space(a.space, base=a.base, tol=a.tol)


def _molecule(M, text: str) -> Molecule:
    parts = text.split(",")
    if len(parts) != 2:
        raise InputError("--molecule", f"expected 'p,q', got {text!r}")
    try:
        return Molecule.of(M, parts[0].strip(), parts[1].strip())
    except (KeyError, ValueError) as e:
        raise InputError("--molecule", str(e)) from None


def _map(a, M):
    target = normspec_from_any(a.target, "--target") if a.target else None
    return load_map(a.map, M, target)


def _param(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.replace("-", "_"), val


def run_validate(a):
    try:
        M = _space(a)
    except InputError as e:
        return {"valid": False, "error": str(e)}, EXIT_FAIL
    return {"valid": True, "n": M.n, "base": M.labels[M.base], "labels": list(M.labels),
            "violations": [v.message for v in check_axioms(M.dist, a.tol)]}, EXIT_OK


def run_analyze(a):
    M = _space(a)
    return {"space": M.id, "report": analyze(M).to_dict(M)}, EXIT_OK


def run_snowflake(a):
    M = _space(a)
    try:
        S = snowflake(M, a.theta)
    except ValueError as e:
        raise InputError("--theta", str(e)) from None
    h = holder_bound_check(M, a.theta)
    return {"space": space_to_dict(S), "holder": h.to_dict()}, EXIT_OK if h.passed else EXIT_FAIL


def run_norm(a):
    M = _space(a)
    x = load_vector(a.vector, M)
    cert = free_norm(x, dual=a.dual)
    out = {"certificate": cert.to_dict(M)}
    if a.decompose and cert.value > 0:
        out["decomposition"] = convex_decompose(x * (1.0 / cert.value)).to_dict()
    return out, EXIT_OK if cert.certified else EXIT_FAIL


def run_lipnorm(a):
    M = _space(a)
    F = _map(a, M)
    return {"map": F.to_dict(), "attainment": bpb.lip_norm(F).to_dict(M)}, EXIT_OK


def run_expose(a):
    M = _space(a)
    mols = [_molecule(M, a.molecule)] if a.molecule else molecule_set(M)
    out = {"molecules": [exposing_functional(m).to_dict() for m in mols],
           "separation": rho_separation(M).to_dict(M)}
    if a.eps:
        try:
            out["profile"] = uniform_exposure_profile(M, a.eps).to_dict(M)
        except NotConcave as e:
            out["profile"] = {"error": str(e)}
    return out, EXIT_OK


def run_alpha(a):
    M = _space(a)
    w = alpha_witness(M)
    return {"witness": w.to_dict(), "valid": w.valid}, EXIT_OK if w.valid else EXIT_FAIL


def run_bpb(a):
    M = _space(a)
    F = _map(a, M)
    m = _molecule(M, a.molecule)
    if not 0 < a.eps < 1:
        raise InputError("--eps", "must lie in (0, 1)")
    if a.bpb_command == "solve":
        res = bpb.lip_bpb_solve(F, m, a.eps)
        out = {"result": res.to_dict(with_duals=True)}
        if res.solution is not None:
            out["verification"] = res.solution.verify(a.eps)
        return out, EXIT_OK
    try:
        if a.bpb_command == "gromov":
            sol = bpb.gromov_perturbation(F, m, a.eps)
        else:
            w = BetaWitness.from_dict(load_json(a.witness)) if a.witness else None
            sol = bpb.beta_transfer(F, m, a.eps, w)
    except (bpb.HypothesisNotMet, bpb.ScalarSolverFailure, NotConcave, WitnessError) as e:
        details = getattr(e, "details", {})
        return {"error": type(e).__name__, "message": str(e), "details": details}, EXIT_FAIL
    checks = sol.verify(a.eps)
    return {"solution": sol.to_dict(), "verification": checks}, EXIT_OK if all(checks.values()) else EXIT_FAIL


def run_modulus(a):
    M = _space(a)
    target = normspec_from_any(a.target, "--target")
    seed = 0 if a.seed is None else a.seed
    ests = [bpb.modulus_estimate(M, target, e, budget=a.budget, samples=a.samples, seed=seed) for e in a.eps]
    rows = [{"eps": e.eps, "eta_lower": e.eta_lower, "eta_upper": e.eta_upper, "solved": e.solved,
             "failed": e.failed, "partial": e.partial} for e in ests]
    out = {"estimates": [e.to_dict() for e in ests], "tag": "empirical",
           "csv": {"columns": ["eps", "eta_lower", "eta_upper", "solved", "failed", "partial"], "rows": rows}}
    return out, EXIT_OK


def run_reproduce(a):
    params = dict(_param(t) for t in a.param)
    if a.experiment in SEEDED:
        if a.seed is None and "seed" not in params:
            raise UsageError(f"{a.experiment} is randomized: pass --seed")
        params.setdefault("seed", a.seed)
    try:
        rep = reproduce(a.experiment, **params)
    except ExperimentError as e:
        raise UsageError(str(e)) from None
    d = rep.to_dict()
    return d, EXIT_OK if rep.passed else EXIT_FAIL


def run_verify(a):
    d = load_json(a.report)
    if "assertions" not in d:
        raise InputError(a.report, "not a report: missing 'assertions'")
    rows = verify_report(d)
    ok = all(r["reproduced"] and r["passed"] for r in rows)
    return {"report": str(a.report), "experiment": d.get("experiment"), "checks": rows, "all_reproduced": ok,
            "csv": {"columns": ["name", "tag", "stored_passed", "passed", "reproduced"], "rows": rows}}, \
        EXIT_OK if ok else EXIT_FAIL


HANDLERS = {"validate": run_validate, "analyze": run_analyze, "snowflake": run_snowflake, "norm": run_norm,
            "lipnorm": run_lipnorm, "expose": run_expose, "alpha": run_alpha, "bpb": run_bpb,
            "modulus": run_modulus, "reproduce": run_reproduce, "verify": run_verify}


def _inputs(a) -> dict:
    return {k: v for k, v in sorted(vars(a).items()) if k not in ("out", "format")}


def _emit(a, command: str, body: dict, code: int, wall: float, stamp: str) -> None:
    csv_part = body.pop("csv", None) if isinstance(body, dict) else None
    if command == "reproduce":
        doc = dict(body)
        doc["csv"] = csv_part
    else:
        doc = {"command": command, "inputs": _inputs(a), "results": body, "versions": versions()}
    doc["exit_code"] = code
    doc["run"] = {"timestamp": stamp, "wall_time": round(wall, 6)}
    if a.out:
        out = Path(a.out)
        write_json(out / "report.json", doc)
        if csv_part and csv_part.get("rows") is not None:
            write_csv(out / "data.csv", csv_part["columns"], csv_part["rows"])
    if a.format == "csv" and csv_part:
        import csv as _csv
        w = _csv.writer(sys.stdout)
        w.writerow(csv_part["columns"])
        from .io import jsonable
        for r in csv_part["rows"]:
            w.writerow([jsonable(r.get(c, "")) for c in csv_part["columns"]])
    else:
        sys.stdout.write(dumps(doc) + "\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:          # --help
        return int(e.code or 0)
    command = a.command + (f" {a.bpb_command}" if a.command == "bpb" else "")
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        body, code = HANDLERS[a.command](a)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, MetricError, NormError, KeyError, ValueError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _emit(a, command, body, code, time.perf_counter() - t0, stamp)
    return code


if __name__ == "__main__":
    sys.exit(main())
