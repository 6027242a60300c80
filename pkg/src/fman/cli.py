"""Command-line front end.

Exit codes: 0 when every check passes, 2 when any check fails, 1 on usage
or evaluation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import algebra, connection, curvature, hodograph, metric, symmetry
from .algebra import ModelError, builtin_example
from .expr import ExprError
from .jet import JetError, UniSeries
from .modelfile import load_model
from .report import Report

SUBCOMMANDS = ("validate", "connection", "curvature", "symmetry", "tsarev", "hodograph", "metric", "conserve",
               "example-list")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("grid must be XSPEC,TSPEC with SPEC = lo:hi:count")
    try:
        return tuple(hodograph.GridSpec.parse(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _series(text):
    """Components separated by ';', coefficients by ','."""
    return [UniSeries(_floats(part)) for part in text.split(";")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fman", description="F-manifold connections, symmetries and integrability checks")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "example-list":
            sp.add_argument("--format", choices=("json", "text", "csv"), default="text")
            sp.add_argument("--out")
            continue
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--model", help="TOML model file")
        src.add_argument("--example", help="builtin model name")
        sp.add_argument("--point", type=_floats, help="comma-separated base point")
        sp.add_argument("--order", type=int, default=1, help="jet order")
        sp.add_argument("--series-order", type=int, default=8, help="series order K")
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("json", "text", "csv"), default="json")
        sp.add_argument("--field", default=None, help="flow field (default: the model's flow)")
        if name == "curvature":
            sp.add_argument("--check-3rc", action="store_true")
            sp.add_argument("--obstructions", action="store_true")
        if name in ("symmetry", "tsarev", "hodograph"):
            sp.add_argument("--symmetry", default=None, help="named field used as symmetry")
            sp.add_argument("--data", default=None, help="named data set of the model")
            sp.add_argument("--cauchy", type=_series, default=None, help="Y0 coefficients: 'a0,a1,..;b0,b1,..'")
        if name == "tsarev":
            sp.add_argument("--axis-data", type=_series, default=None, help="phi coefficients: 'a0,a1,..;b0,..'")
        if name == "hodograph":
            sp.add_argument("--grid", type=_grid, required=True, help="XSPEC,TSPEC with SPEC = lo:hi:count")
            sp.add_argument("--guess", type=_floats, default=None)
            sp.add_argument("--halvings", type=int, default=2)
        if name == "metric":
            sp.add_argument("--affinor", action="append", default=[], help="FIELD:SIGN for nonlocal conditions")
    return p


def _load(args):
    if args.example:
        return builtin_example(args.example)
    return load_model(args.model)


def _point(args, model):
    if args.point is None:
        return model.base_point
    if len(args.point) != model.dim:
        raise UsageError(f"--point has {len(args.point)} entries, model dimension is {model.dim}")
    return np.array(args.point)


def _tol(args, default):
    return default if args.tol is None else args.tol


def _flow(args, model):
    return args.field or model.flow_name()


def _cauchy_from(args, model, K):
    """Cauchy data on the unit curve from --cauchy or --data."""
    if args.cauchy is not None:
        return [c.padded(K) for c in args.cauchy]
    name = args.data
    if name is None:
        kinds = [n for n, d in model.data.items() if d.kind == "e"]
        if not kinds:
            return None
        name = kinds[0]
    if name not in model.data:
        raise UsageError(f"model has no data set {name!r}")
    d = model.data[name]
    if d.kind == "e":
        return d.uniseries(K)
    return symmetry.transform_tsarev_to_e(model, _flow(args, model), d.uniseries(K), K).components


def cmd_validate(args, model):
    pt = _point(args, model)
    reports = [algebra.check_algebra_axioms(model, pt, max(args.order, 1), _tol(args, 1e-10))]
    flow = _flow(args, model)
    reports.append(algebra.check_cyclic(model, flow, pt, _tol(args, 1e-8)))
    return reports, {}


def cmd_connection(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    gamma = connection.build_natural_connection(model, flow, pt, max(args.order, 1))
    rep = connection.check_connection_axioms(gamma, model, flow, pt, _tol(args, 1e-9))
    extra = {"christoffel": gamma.values().tolist(), "christoffel_convention": "Gamma[k][i][j] = Gamma^k_ij"}
    return [rep], extra


def cmd_curvature(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    reports = []
    gamma, R, pj = curvature.natural_curvature(model, flow, pt)
    extra = {"bianchi_residual": R.bianchi_residual(), "riemann_norm": R.norm}
    if args.check_3rc or not args.obstructions:
        reports.append(curvature.check_3rc(R, pj.c.values(), _tol(args, 1e-10), point=pt))
    if args.obstructions:
        adapted = symmetry.adapt_chart(model)
        P = symmetry.adapting_matrix(model)
        y = np.linalg.solve(P, pt)
        reports.append(curvature.check_obstructions(adapted, flow, y, _tol(args, 1e-10)))
    return reports, extra


def cmd_symmetry(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    K = args.series_order
    reports = []
    extra = {}
    if args.symmetry:
        reports.append(symmetry.check_symmetry_equation(model, flow, args.symmetry, pt, _tol(args, 1e-10)))
        reports.append(symmetry.check_commuting_flows(model, flow, args.symmetry, pt, _tol(args, 1e-10), X=flow))
        return reports, extra
    data = _cauchy_from(args, model, K)
    if data is None:
        raise UsageError("give --symmetry, --data or --cauchy")
    Y = symmetry.solve_symmetry(model, flow, data, K, pt)
    space = Y.jet.space
    extra["series_order"] = K
    extra["monomials"] = [list(a) for a in space.alphas]
    extra["coefficients"] = Y.coefficients().tolist()
    extra.update({k: v for k, v in Y.info.items()})
    reports.append(symmetry.check_symmetry_equation(model, flow, Y, pt, _tol(args, 1e-8)))
    return reports, extra


def cmd_tsarev(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    K = args.series_order
    reports = []
    a = symmetry.tsarev_coefficients(model, flow, pt, 0).values()
    extra = {"a": a.tolist()}
    if args.symmetry:
        reports.append(symmetry.tsarev_system(model, flow, args.symmetry, pt, _tol(args, 1e-12)))
    # polynomial coefficients from the command line are exact, so pad with zeros
    phi = None if args.axis_data is None else [c.padded(K) for c in args.axis_data]
    if phi is None and args.data:
        d = model.data.get(args.data)
        if d is None:
            raise UsageError(f"model has no data set {args.data!r}")
        if d.kind == "tsarev":
            phi = d.uniseries(K)
    if phi is not None:
        Y0 = symmetry.transform_tsarev_to_e(model, flow, phi, K, pt)
        back = symmetry.transform_e_to_tsarev(model, flow, Y0, K, pt)
        extra["cauchy_data"] = Y0.array().tolist()
        diff = float(np.max(np.abs(back.array() - np.array([s.truncate(K).coeffs for s in phi]))))
        reports.append(Report("tsarev_round_trip", (("coefficients", diff),), _tol(args, 1e-10), point=tuple(pt), order=K))
    elif args.cauchy is not None or (args.data and model.data[args.data].kind == "e"):
        Y0 = _cauchy_from(args, model, K)
        phi = symmetry.transform_e_to_tsarev(model, flow, Y0, K, pt)
        extra["axis_data"] = phi.array().tolist()
    if not reports and "axis_data" not in extra and "cauchy_data" not in extra:
        reports.append(symmetry.tsarev_system(model, flow, flow, pt, _tol(args, 1e-12)))
    return reports, extra


def cmd_hodograph(args, model):
    flow = _flow(args, model)
    Y = args.symmetry
    if Y is None:
        data = _cauchy_from(args, model, args.series_order)
        if data is None:
            raise UsageError("give --symmetry, --data or --cauchy")
        Y = symmetry.solve_symmetry(model, flow, data, args.series_order, _point(args, model))
    guess = args.guess if args.guess is not None else (args.point if args.point is not None else None)
    problem = hodograph.HodographProblem(model, flow, Y, tuple(guess) if guess is not None else None)
    xspec, tspec = args.grid
    grid = hodograph.hodograph_grid(problem, xspec, tspec, parallel=hodograph._threads() > 1)
    reports = []
    conv = grid.converged
    alg = float(np.max(grid.residual[conv])) if conv.any() else float("inf")
    reports.append(Report("hodograph_newton", (("algebraic_residual", alg),
                                               ("unconverged_nodes", float((~conv).sum()))),
                          problem.newton_tol, convention_notes=("x e + t X(u) = Y(u)",)))
    try:
        reports.append(hodograph.verify_hodograph_solution(model, flow, grid, _tol(args, 1e-3), problem, args.halvings))
    except hodograph.HodographError as exc:
        reports.append(Report("hodograph_pde", (("pde_residual", float("inf")),), _tol(args, 1e-3),
                              info={"error": str(exc)}))
    return reports, {"nodes": grid.records()}


def _affinors(args):
    out = []
    for spec in args.affinor:
        name, _, sign = spec.partition(":")
        try:
            out.append((name, float(sign or "1")))
        except ValueError:
            raise UsageError(f"bad --affinor {spec!r}; use FIELD:SIGN") from None
    return out


def cmd_metric(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    tol = _tol(args, 1e-9)
    reports = [
        metric.check_invariance(None, model, flow, pt, tol),
        metric.check_dn(None, model, flow, pt, tol),
        metric.check_riemannian_f(None, model, pt, tol),
    ]
    G = metric.connection_from_metric(None, model, pt, 1)
    reports.append(metric.check_gfromnabla(None, G, model, pt, tol))
    extra = {}
    try:
        nat = connection.build_natural_connection(model, flow, pt, 1)
        diff = float(np.max(np.abs(G.gamma.coeffs - nat.gamma.coeffs)))
        reports.append(Report("metric_vs_natural_connection", (("christoffel_difference", diff),), tol, point=tuple(pt), order=1))
    except connection.NonCyclicError as exc:
        extra["natural_connection"] = str(exc)
    aff = _affinors(args)
    if aff:
        reports.append(metric.check_nonlocal_conditions(None, model, aff, pt, tol))
    return reports, extra


def cmd_conserve(args, model):
    pt = _point(args, model)
    flow = _flow(args, model)
    if not model.densities:
        raise UsageError(f"model {model.name!r} declares no densities")
    return [metric.conservation_check(model, flow, None, None, pt, _tol(args, 1e-9))], {}


HANDLERS = {
    "validate": cmd_validate,
    "connection": cmd_connection,
    "curvature": cmd_curvature,
    "symmetry": cmd_symmetry,
    "tsarev": cmd_tsarev,
    "hodograph": cmd_hodograph,
    "metric": cmd_metric,
    "conserve": cmd_conserve,
}


def _g(x):
    return format(x, ".17g")


def render(fmt, command, model_name, reports, extra) -> str:
    verdict = all(r.verdict for r in reports)
    if fmt == "json":
        bundle = {"command": command, "model": model_name, "verdict": verdict,
                  "reports": [r.to_dict() for r in reports]}
        if extra:
            from .report import _jsonable

            bundle["data"] = _jsonable(extra)
        return json.dumps(bundle, indent=2, allow_nan=True) + "\n"
    if fmt == "text":
        lines = [f"{command} on {model_name}: {'PASS' if verdict else 'FAIL'}"]
        lines += [r.summary() for r in reports]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if command == "hodograph" and "nodes" in extra:
        nodes = extra["nodes"]
        n = len(nodes[0]["u"]) if nodes else 0
        w.writerow(["x", "t"] + [f"u{k + 1}" for k in range(n)] + ["status", "residual"])
        for rec in nodes:
            w.writerow([_g(rec["x"]), _g(rec["t"])] + [_g(v) for v in rec["u"]] + [rec["status"], _g(rec["residual"])])
        return buf.getvalue()
    w.writerow(["check", "item", "residual", "tolerance", "verdict"])
    for r in reports:
        for name, res in r.items:
            w.writerow([r.check, name, _g(res), _g(r.tolerance), "pass" if r.verdict else "fail"])
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    if args.command == "example-list":
        names = algebra.list_examples()
        if args.format == "json":
            text = json.dumps({"examples": names}, indent=2) + "\n"
        else:
            text = "\n".join(names) + "\n"
        _emit(text, args.out)
        return 0
    try:
        model = _load(args)
        reports, extra = HANDLERS[args.command](args, model)
        text = render(args.format, args.command, model.name, reports, extra)
        _emit(text, args.out)
    except (UsageError, ModelError, ExprError, JetError, OSError, ValueError, ArithmeticError) as exc:
        print(f"fman {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0 if all(r.verdict for r in reports) else 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
