"""Command-line frontend.

Every command prints a JSON run report ``{command, inputs-digest, results,
diagnostics, timings}`` with sorted keys.  Exit codes: 0 ok, 1 bad input,
2 solver stalled or out of budget, 3 subproblem failure, 4 size cap hit.
Sampling uses numpy's PCG64 generator seeded from ``--seed``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import fixtures
from . import problemfile as pf
from .numerics import CapExceeded
from .regularity import _jsonable, inputs_digest

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_SUBPROBLEM, EXIT_CAP = 0, 1, 2, 3, 4

DEMOS = ("minus-x-x", "ell-infty-diag", "isolated-points-graph", "cube-root", "sum-counterexample")
RADII = (1e-1, 1e-2, 1e-3)


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return _jsonable(obj)


def _report(command, inputs, results, diagnostics, timings):
    return {
        "command": command,
        "inputs-digest": inputs_digest(inputs),
        "results": _plain(results),
        "diagnostics": _plain(diagnostics),
        "timings": timings,
    }


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- commands ---------------------------------------------------------------------


def cmd_solve(args, doc):
    from .solvers import NewtonConfig, broyden_inexact_newton, josephy_newton, semismooth_newton

    if doc["kind"] != "geq":
        raise InputError("solve needs a geq problem file")
    ge = pf.build_geq(doc)
    if args.x0 is not None:
        x0 = np.asarray(args.x0, dtype=float)
    elif "x0" in doc:
        x0 = pf._vec(doc["x0"])
    else:
        raise InputError("no starting point: pass --x0 or put x0 in the file")
    if x0.size != ge.dim:
        raise InputError(f"x0 has {x0.size} entries, expected {ge.dim}")
    cfg = NewtonConfig(max_iter=args.max_iter)
    if args.method == "josephy":
        rep = josephy_newton(ge, x0, cfg)
    elif args.method == "semismooth":
        rep = semismooth_newton(ge, x0, cfg)
    else:
        J = ge.smooth.jacobian(x0)
        J = J.toarray() if hasattr(J, "toarray") else np.atleast_2d(J)
        rep = broyden_inexact_newton(ge, x0, J, cfg=cfg)
    if args.csv:
        _write(args.csv, rep.to_csv())
    code = {"converged": EXIT_OK, "stalled": EXIT_BUDGET, "budget-exhausted": EXIT_BUDGET,
            "subproblem-failed": EXIT_SUBPROBLEM}[rep.status]
    res = rep.to_dict()
    diag = res.pop("diagnostics")
    res["method"] = args.method
    return res, diag, code


def _reference(ge):
    if ge.reference_point is None:
        raise InputError("this routine needs reference_point in the problem file")
    return ge.reference_point, ge.reference_value


def cmd_regularity(args, doc):
    from . import regularity as rg

    routine = args.routine
    dn, cn = args.norms
    if routine in ("linear", "radius"):
        if doc["kind"] == "linear":
            A, _ = pf.build_linear(doc)
        elif doc["kind"] == "geq":
            A, _ = pf.affine_data(doc)
        else:
            raise InputError(f"routine {routine} needs a linear or geq file")
        if routine == "linear":
            lin = rg.linear_map_moduli(A, dn, cn)
            return {"analysis": lin.to_dict(), "consistent": lin.consistent(),
                    "modulus": lin.subreg_modulus, "kind": "exact"}, {}, EXIT_OK
        sigma, B = rg.radius_linear(A)
        return {"radius": sigma, "worst_perturbation": B, "kind": "exact"}, {}, EXIT_OK
    if doc["kind"] != "geq":
        raise InputError(f"routine {routine} needs a geq problem file")
    ge = pf.build_geq(doc)
    if routine == "rate":
        est = rg.displacement_rate_sample(ge, args.radii, n_samples=args.samples, seed=args.seed)
        return {"estimate": est.to_dict(), "modulus": est.value}, {}, EXIT_OK
    if routine == "qrate":
        est = rg.q_subreg_estimate(ge, args.q, args.radii, n_samples=args.samples, seed=args.seed)
        return {"estimate": est.to_dict(), "modulus": est.value}, {}, EXIT_OK
    if routine == "slope":
        val = rg.nonlocal_slope_estimate(ge, seed=args.seed)
        return {"slope": val, "kind": "sampled-upper"}, {}, EXIT_OK
    # polyhedral
    xbar, ybar = _reference(ge)
    if "selection" in doc["set"]:
        from .geq import ZeroMap

        h, C = pf.selection_pieces(doc), ZeroMap()
        if "linear" in doc["smooth"]:
            M, c = pf.affine_data(doc)
            h = [(A + M, b + c) for A, b in h]
    else:
        h, C = pf.affine_data(doc), ge.set_part
    isolated = rg.polyhedral_isolated_point_test(h, C, xbar, ybar)
    norm = rg.graphical_derivative_outer_norm(h, C, xbar, ybar)
    return {"isolated": isolated, "modulus": norm, "kind": "exact",
            "norms": ["linf", "linf"]}, {}, EXIT_OK


def cmd_kkt(args, doc):
    from .nlp import KktPoint, theorem_nlp_equivalence

    if doc["kind"] != "nlp":
        raise InputError("kkt needs an nlp problem file")
    prob, pt = pf.build_nlp(doc)
    if args.point is not None:
        x, y = args.point
        pt = KktPoint(x, y)
    if pt is None:
        raise InputError("no KKT point: pass --point or put point in the file")
    try:
        pt.validate(prob)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = theorem_nlp_equivalence(prob, pt, seed=args.seed)
    return out, {}, EXIT_OK


def cmd_radius(args, doc):
    from .polyhedral import Polyhedron
    from .regularity import radius_variational

    if doc["kind"] != "linear":
        raise InputError("radius needs a linear problem file")
    A, K = pf.build_linear(doc)
    if A.shape[0] != A.shape[1]:
        raise InputError("radius needs a square matrix")
    if K is None:
        K = Polyhedron.whole_space(A.shape[0])
    sigma, x, worst_B = radius_variational(A, K, seed=args.seed)
    return {"sigma": sigma, "minimiser": x, "worst_B": worst_B}, {}, EXIT_OK


def cmd_ocp(args, doc):
    from .ocp import SolveFailure, convergence_experiment

    if doc["kind"] != "ocp":
        raise InputError("ocp needs an ocp problem file")
    cp = pf.build_ocp(doc)
    exact = fixtures.lq_exact() if doc.get("builtin") == "LQ" else None
    try:
        study = convergence_experiment(cp, args.Ns, args.Nref, exact=exact)
    except SolveFailure as exc:
        return {"error": str(exc)}, exc.report.to_dict(), EXIT_SUBPROBLEM
    if args.csv:
        _write(args.csv, study.to_csv())
    res = study.summary()
    res["w_norms"] = [float(w) for w in study.w_norms]
    res["iterations"] = list(study.iterations)
    diag = res.pop("diagnostics")
    return res, diag, EXIT_OK


# --- demos ------------------------------------------------------------------------


def _verdict(name, expected, computed, ok):
    return {"check": name, "expected": expected, "computed": computed, "verdict": "PASS" if ok else "FAIL"}


def demo_minus_x_x(args):
    from .geq import ZeroMap
    from .regularity import (
        coderivative_inner_norm_pieces,
        displacement_rate_sample,
        graphical_derivative_outer_norm,
        nonlocal_slope_estimate,
    )

    ge = fixtures.minus_x_x()
    pieces = fixtures.minus_x_x_pieces()
    est = displacement_rate_sample(ge, RADII, seed=args.seed)
    outer = graphical_derivative_outer_norm(pieces, ZeroMap(), [0.0], [0.0])
    inner = coderivative_inner_norm_pieces(pieces)
    slope = nonlocal_slope_estimate(ge, seed=args.seed)
    return [
        _verdict("sampled modulus", 1.0, est.value, abs(est.value - 1.0) <= 0.02),
        _verdict("graphical derivative outer norm", 1.0, outer, abs(outer - 1.0) <= 1e-9),
        _verdict("Frechet coderivative inner norm", np.inf, inner, np.isinf(inner)),
        _verdict("nonlocal slope", 1.0, slope, abs(slope - 1.0) <= 0.02),
        _verdict("strongly subregular", True, est.finite, est.finite),
    ]


def demo_ell_infty_diag(args):
    from .regularity import linear_map_moduli

    rows = []
    for N in args.N or (5, 10, 50):
        lin = linear_map_moduli(fixtures.ell_infty_diag(N), "linf", "l2")
        rows.append(_verdict(f"modulus linf->l2, N={N}", float(N), lin.subreg_modulus,
                             abs(lin.subreg_modulus - N) <= 1e-9 * N))
        rows.append(_verdict(f"norm chain, N={N}", True, lin.consistent(), lin.consistent()))
    return rows


def demo_isolated_points_graph(args):
    from .regularity import displacement_rate_sample, nonlocal_slope_estimate

    ge = fixtures.isolated_points_graph()
    est = displacement_rate_sample(ge, RADII, seed=args.seed)
    slope = nonlocal_slope_estimate(ge, seed=args.seed)
    return [
        _verdict("sampled modulus", np.inf, est.value, np.isinf(est.value)),
        _verdict("nonlocal slope", 0.0, slope, slope <= 1e-12),
        _verdict("strongly subregular", False, est.finite, not est.finite),
    ]


def demo_cube_root(args):
    from .regularity import q_subreg_estimate

    ge = fixtures.cube()
    q1 = q_subreg_estimate(ge, 1.0, RADII, seed=args.seed)
    q3 = q_subreg_estimate(ge, 1.0 / 3.0, RADII, seed=args.seed)
    return [
        _verdict("modulus q=1", np.inf, q1.value, np.isinf(q1.value)),
        _verdict("modulus q=1/3", 1.0, q3.value, abs(q3.value - 1.0) <= 0.05),
    ]


def demo_sum_counterexample(args):
    from .regularity import displacement_rate_sample

    G = displacement_rate_sample(fixtures.sum_G(), RADII, seed=args.seed)
    S = displacement_rate_sample(fixtures.sum_counterexample(), RADII, seed=args.seed)
    return [
        _verdict("G strongly subregular, modulus", 0.5, G.value, abs(G.value - 0.5) <= 0.01),
        _verdict("g+G strongly subregular", False, S.finite, not S.finite),
    ]


_DEMO_FUNCS = {
    "minus-x-x": demo_minus_x_x,
    "ell-infty-diag": demo_ell_infty_diag,
    "isolated-points-graph": demo_isolated_points_graph,
    "cube-root": demo_cube_root,
    "sum-counterexample": demo_sum_counterexample,
}


def verdict_table(rows):
    def fmt(v):
        if isinstance(v, bool):
            return str(v)
        if isinstance(v, (float, int, np.floating)):
            return "+inf" if np.isinf(v) else f"{float(v):.6g}"
        return str(v)

    lines = [f"{'check':<36} {'expected':>10} {'computed':>12}  verdict"]
    for r in rows:
        lines.append(f"{r['check']:<36} {fmt(r['expected']):>10} {fmt(r['computed']):>12}  {r['verdict']}")
    return "\n".join(lines)


def cmd_demo(args, doc=None):
    rows = _DEMO_FUNCS[args.name](args)
    print(verdict_table(rows), file=sys.stderr)
    passed = all(r["verdict"] == "PASS" for r in rows)
    return {"demo": args.name, "rows": rows, "all_pass": passed}, {}, EXIT_OK


# --- entry point ------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="subreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, with_file=True):
        if with_file:
            sp.add_argument("file", help="JSON problem file")
        sp.add_argument("--seed", type=int, default=0, help="64-bit seed for sampling (default 0)")
        sp.add_argument("--timings", action="store_true", help="record wall-clock timings in the report")
        sp.add_argument("--out", help="write the report here instead of stdout")

    s = sub.add_parser("solve", help="run a Newton-type solver on a geq file")
    common(s)
    s.add_argument("--method", choices=("josephy", "semismooth", "broyden"), default="josephy")
    s.add_argument("--x0", type=_floats)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--csv", help="iterate log CSV path")

    r = sub.add_parser("regularity", help="moduli and derivative criteria")
    common(r)
    r.add_argument("--routine", choices=("rate", "qrate", "linear", "polyhedral", "slope", "radius"),
                   required=True)
    r.add_argument("--q", type=float, default=1.0)
    r.add_argument("--norms", default="l2,l2", type=lambda t: tuple(t.split(",")),
                   help="domain,codomain norms from {l2, linf}")
    r.add_argument("--radii", type=_floats, default=list(RADII))
    r.add_argument("--samples", type=int, default=10_000)

    k = sub.add_parser("kkt", help="KKT analysis of an nlp file")
    common(k)
    k.add_argument("--point", nargs=2, type=_floats, metavar=("X", "Y"))

    rd = sub.add_parser("radius", help="variational radius of a linear file")
    common(rd)

    o = sub.add_parser("ocp", help="Euler discretization error study")
    common(o)
    o.add_argument("--Ns", type=_ints, default=[8, 16, 32, 64, 128, 256])
    o.add_argument("--Nref", type=int, default=4096)
    o.add_argument("--csv", help="study CSV path")

    d = sub.add_parser("demo", help="run a gallery example")
    common(d, with_file=False)
    d.add_argument("name", choices=DEMOS)
    d.add_argument("--N", type=_ints, help="sizes for ell-infty-diag")
    return p


_COMMANDS = {
    "solve": cmd_solve,
    "regularity": cmd_regularity,
    "kkt": cmd_kkt,
    "radius": cmd_radius,
    "ocp": cmd_ocp,
    "demo": cmd_demo,
}


def _inputs(args, doc):
    opts = {k: v for k, v in vars(args).items() if k not in ("file", "out", "csv", "timings")}
    return {"options": opts, "problem": doc}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "norms", None) is not None and (len(args.norms) != 2 or
                                                      any(n not in ("l2", "linf") for n in args.norms)):
        print("subreg: error: --norms must be two of l2, linf", file=sys.stderr)
        return EXIT_INPUT
    doc = None
    t0 = time.perf_counter()
    try:
        if args.command != "demo":
            doc = pf.load(args.file)
        results, diagnostics, code = _COMMANDS[args.command](args, doc)
    except (pf.ProblemFileError, InputError) as exc:
        print(f"subreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapExceeded as exc:
        print(f"subreg: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"subreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    timings = {"wall_seconds": time.perf_counter() - t0} if args.timings else None
    report = _report(args.command, _inputs(args, doc), results, diagnostics, timings)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
