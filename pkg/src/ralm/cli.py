"""Command-line driver: problem-file ingestion, builtin fixture library,
solver execution, diagnostics, and trace/report emission.

Problem files are TOML. Required keys: `manifold`, `variables`, `objective`.
Optional: `name`, `equalities`, `inequalities`, `start`, and a `[solver]`
table overriding solver settings (scalar AlmConfig fields plus `eps0` and
`eps_factor` for the geometric tolerance schedule, and an optional
`[solver.inner]` table). Expressions use the small arithmetic grammar from
the expr module over the declared variable names.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import alm
from . import cq_diagnostics as cq
from . import expr as ex
from . import manifold as mf
from . import report
from .inner_solver import InnerConfig
from .problem import (
    DEFAULT_TOL_ACT,
    MultiplierEstimate,
    constraint_values,
    make_problem,
)

__all__ = ["ProblemFileError", "UsageError", "load_problem", "builtin_names", "main"]

ENV_BUILTIN_DIR = "RALM_BUILTIN_DIR"


class UsageError(Exception):
    """Bad invocation: unknown flag, malformed value, missing input."""


class ProblemFileError(ValueError):
    """A problem file failed to parse or validate."""


@dataclass(frozen=True)
class LoadedProblem:
    problem: object
    start: mf.Point | None
    overrides: dict
    origin: str


_SOLVER_KEYS = {
    "tau", "gamma", "lambda_min", "lambda_max", "mu_max", "rho1",
    "max_outer", "kkt_tol", "feas_tol", "eps0", "eps_factor",
}
_INNER_KEYS = {
    "grad_tol", "max_iters", "armijo_c", "backtrack_factor",
    "initial_step", "step_floor",
}
_TOP_KEYS = {
    "name", "manifold", "variables", "objective",
    "equalities", "inequalities", "start", "solver",
}


def _builtin_dirs():
    dirs = []
    env = os.environ.get(ENV_BUILTIN_DIR, "")
    for entry in env.split(os.pathsep):
        if entry:
            dirs.append(Path(entry))
    dirs.append(resources.files("ralm") / "builtins")
    return dirs


def builtin_names():
    """Registry of builtin problem names, earlier directories shadowing
    later ones (user directories from RALM_BUILTIN_DIR come first)."""
    registry = {}
    for d in _builtin_dirs():
        if not d.is_dir():
            continue
        for entry in sorted(d.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".toml"):
                registry.setdefault(entry.name[: -len(".toml")], entry)
    return registry


def _expr_list(raw, key, var_names, origin):
    if not isinstance(raw, list) or not all(isinstance(s, str) for s in raw):
        raise ProblemFileError(f"{origin}: `{key}` must be an array of strings")
    out = []
    for i, text in enumerate(raw):
        try:
            out.append(ex.parse(text, var_names))
        except ex.ExprError as err:
            raise ProblemFileError(
                f"{origin}: {key}[{i}]: {err.message} (byte offset {err.offset})"
            ) from None
    return tuple(out)


def parse_problem_text(text, origin):
    """Parse one TOML problem document into a LoadedProblem."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ProblemFileError(f"{origin}: {err}") from None

    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ProblemFileError(f"{origin}: unknown keys {sorted(unknown)}")
    for key in ("manifold", "variables", "objective"):
        if key not in data:
            raise ProblemFileError(f"{origin}: missing required key `{key}`")

    try:
        manifold = mf.parse_manifold(str(data["manifold"]))
    except ValueError as err:
        raise ProblemFileError(f"{origin}: manifold: {err}") from None

    var_names = data["variables"]
    if (
        not isinstance(var_names, list)
        or not all(isinstance(v, str) for v in var_names)
        or len(var_names) != manifold.ambient_dim
    ):
        raise ProblemFileError(
            f"{origin}: `variables` must list {manifold.ambient_dim} names"
        )
    var_names = tuple(var_names)

    objective = _expr_list([data["objective"]], "objective", var_names, origin)[0]
    equalities = _expr_list(data.get("equalities", []), "equalities", var_names, origin)
    inequalities = _expr_list(
        data.get("inequalities", []), "inequalities", var_names, origin
    )
    name = str(data.get("name", "problem"))
    try:
        problem = make_problem(name, manifold, objective, equalities, inequalities)
    except ValueError as err:
        raise ProblemFileError(f"{origin}: {err}") from None

    start = None
    if "start" in data:
        raw = data["start"]
        if not isinstance(raw, list) or len(raw) != manifold.ambient_dim:
            raise ProblemFileError(
                f"{origin}: `start` must list {manifold.ambient_dim} coordinates"
            )
        try:
            start = mf.make_point(manifold, np.array([float(v) for v in raw]))
        except (TypeError, ValueError) as err:
            raise ProblemFileError(f"{origin}: start: {err}") from None

    overrides = {}
    solver = data.get("solver", {})
    if not isinstance(solver, dict):
        raise ProblemFileError(f"{origin}: `solver` must be a table")
    inner_tab = solver.pop("inner", None)
    bad = set(solver) - _SOLVER_KEYS
    if bad:
        raise ProblemFileError(f"{origin}: unknown solver keys {sorted(bad)}")
    overrides.update(solver)
    if inner_tab is not None:
        if not isinstance(inner_tab, dict) or set(inner_tab) - _INNER_KEYS:
            raise ProblemFileError(f"{origin}: bad `solver.inner` table")
        overrides["inner"] = dict(inner_tab)

    return LoadedProblem(problem, start, overrides, origin)


def load_problem(ref):
    """Resolve `ref` as a builtin name first, then as a file path."""
    registry = builtin_names()
    if ref in registry:
        path = registry[ref]
        return parse_problem_text(path.read_text(), str(path))
    path = Path(ref)
    if not path.is_file():
        raise ProblemFileError(
            f"{ref!r} is neither a builtin problem nor an existing file "
            f"(builtins: {', '.join(sorted(registry)) or 'none'})"
        )
    return parse_problem_text(path.read_text(), str(path))


def _build_config(overrides, args):
    merged = dict(overrides)
    for key in ("kkt_tol", "feas_tol", "rho1", "tau", "gamma", "max_outer", "eps0"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    eps0 = merged.pop("eps0", None)
    eps_factor = merged.pop("eps_factor", None)
    inner_kw = merged.pop("inner", None)
    try:
        if eps0 is not None or eps_factor is not None:
            merged["eps_schedule"] = alm.GeometricSchedule(
                initial=0.1 if eps0 is None else float(eps0),
                factor=0.5 if eps_factor is None else float(eps_factor),
            )
        if inner_kw is not None:
            merged["inner"] = InnerConfig(**inner_kw)
        return alm.AlmConfig(**merged)
    except (TypeError, ValueError) as err:
        raise UsageError(f"bad solver settings: {err}") from None


def _resolve_start(loaded, args):
    if getattr(args, "point", None) is not None:
        return _parse_point(args.point, loaded.problem.manifold)
    if loaded.start is None:
        raise UsageError(
            f"problem {loaded.problem.name!r} declares no start point; pass --point"
        )
    return loaded.start


def _parse_point(text, manifold):
    try:
        coords = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise UsageError(f"--point must be comma-separated numbers, got {text!r}") from None
    if coords.size != manifold.ambient_dim:
        raise UsageError(
            f"--point has {coords.size} coordinates, manifold needs "
            f"{manifold.ambient_dim}"
        )
    try:
        return mf.make_point(manifold, coords)
    except ValueError as err:
        raise UsageError(f"--point: {err}") from None


def _out_dir(args):
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(document):
    print(json.dumps(document, indent=2))


def cmd_solve(args):
    loaded = load_problem(args.problem)
    prob = loaded.problem
    cfg = _build_config(loaded.overrides, args)
    start = _resolve_start(loaded, args)
    trace, verdict = alm.run(prob, cfg, start)

    out = _out_dir(args)
    trace_path = out / f"{prob.name}-trace.csv"
    alm.write_trace(trace, trace_path)
    figure_path = out / f"{prob.name}-convergence.png"
    report.render_solve_figure(prob, trace, figure_path)

    last = trace.last
    mult = MultiplierEstimate(last.lam, last.mu)
    stat, feas, comp = cq.kkt_residual(prob, last.point, mult)
    _emit({
        "problem": prob.name,
        "verdict": verdict,
        "outer_iterations": len(trace),
        "point": [float(c) for c in last.point.coords],
        "lambda": [float(v) for v in last.lam],
        "mu": [float(v) for v in last.mu],
        "rho": last.rho,
        "residuals": {
            "stationarity": stat,
            "feasibility": feas,
            "complementarity": comp,
        },
        "trace_csv": str(trace_path),
        "figure": str(figure_path),
    })
    if verdict == alm.KKT_APPROX:
        return 0
    if verdict == alm.INFEASIBLE_STATIONARY:
        return 2
    return 3


def cmd_certify(args):
    loaded = load_problem(args.problem)
    prob = loaded.problem
    if args.point is not None:
        point = _parse_point(args.point, prob.manifold)
    else:
        cfg = _build_config(loaded.overrides, args)
        start = _resolve_start(loaded, args)
        trace, _ = alm.run(prob, cfg, start)
        point = trace.last.point

    h, g = constraint_values(prob, point)
    violation = max(
        float(np.max(np.abs(h), initial=0.0)),
        float(np.max(np.clip(g, 0.0, None), initial=0.0)),
    )
    if violation > DEFAULT_TOL_ACT:
        print(
            f"error: point violates the constraints by {violation:.3g} "
            f"(tolerance {DEFAULT_TOL_ACT:g})",
            file=sys.stderr,
        )
        return 5

    rep = cq.certify(prob, point, eps=args.cq_eps, samples=args.cq_samples,
                     seed=args.seed)
    _emit(rep.to_json_dict())
    return 0


def cmd_analyze(args):
    loaded = load_problem(args.problem)
    prob = loaded.problem
    trace = alm.read_trace(args.trace, prob)
    if args.point is not None:
        limit = _parse_point(args.point, prob.manifold)
    else:
        limit = trace.last.point
    rep = cq.analyze_sequence(prob, trace, limit)

    figure_path = _out_dir(args) / f"{prob.name}-sequence.png"
    report.render_analyze_figure(prob, trace, rep, figure_path)
    doc = rep.to_json_dict()
    doc["figure"] = str(figure_path)
    _emit(doc)
    return 0


def cmd_list(args):
    del args
    rows = []
    for name, path in sorted(builtin_names().items()):
        try:
            loaded = parse_problem_text(path.read_text(), str(path))
            prob = loaded.problem
            rows.append((name, str(prob.manifold), prob.n_eq, prob.n_ineq))
        except ProblemFileError:
            rows.append((name, "unreadable", "-", "-"))
    width = max((len(r[0]) for r in rows), default=4)
    print(f"{'name':<{width}}  manifold      eq  ineq")
    for name, man, s, m in rows:
        print(f"{name:<{width}}  {man:<12}  {s:>2}  {m:>4}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_solver_flags(sub):
    sub.add_argument("--kkt-tol", dest="kkt_tol", type=float)
    sub.add_argument("--feas-tol", dest="feas_tol", type=float)
    sub.add_argument("--rho1", type=float)
    sub.add_argument("--tau", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--eps0", type=float)
    sub.add_argument("--max-outer", dest="max_outer", type=int)


def build_parser():
    parser = _Parser(prog="ralm", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    solve = subs.add_parser("solve", help="run the safeguarded outer loop")
    solve.add_argument("--problem", required=True, help="builtin name or file path")
    solve.add_argument("--out", default=".", help="output directory")
    solve.add_argument("--point", help="start point x,y,...")
    _add_solver_flags(solve)
    solve.set_defaults(func=cmd_solve)

    certify = subs.add_parser("certify", help="evaluate constraint qualifications")
    certify.add_argument("--problem", required=True)
    certify.add_argument("--point", help="point to certify; omitted = solve first")
    certify.add_argument("--cq-eps", dest="cq_eps", type=float, default=cq.DEFAULT_EPS)
    certify.add_argument(
        "--cq-samples", dest="cq_samples", type=int, default=cq.DEFAULT_SAMPLES
    )
    certify.add_argument("--seed", type=int, default=0)
    certify.set_defaults(func=cmd_certify)

    analyze = subs.add_parser("analyze", help="sequential optimality from a trace")
    analyze.add_argument("trace", help="trace CSV written by solve")
    analyze.add_argument("--problem", required=True)
    analyze.add_argument("--out", default=".", help="output directory")
    analyze.add_argument("--point", help="limit point override x,y,...")
    analyze.set_defaults(func=cmd_analyze)

    lst = subs.add_parser("list-problems", help="list builtin problems")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 64
    except ProblemFileError as err:
        print(f"error: {err}", file=sys.stderr)
        return 64
    except alm.TraceFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except ex.ExprDomainError as err:
        print(f"error: expression domain failure: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 64


if __name__ == "__main__":
    sys.exit(main())
