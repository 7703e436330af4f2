"""JSON problem files: schema, validation and construction.

A problem file has a top-level ``kind``:

``geq``
    ``0 in f(x) + F(x)``; ``f`` is ``{"builtin": name}``, ``{"polynomial": [...]}``
    or ``{"linear": {"M": ..., "c": ...}}``; ``F`` is one of the set blocks below.
``nlp``
    Polynomial objective and constraints plus a KKT point.
``ocp``
    Polynomial running cost and dynamics on ``[0, 1]`` with a control box,
    or ``{"builtin": "F8"}``.
``linear``
    A matrix ``A`` and optionally a cone ``K = {x : G x <= 0, E x = 0}``.
"""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from . import fixtures
from .geq import (
    BoxNormalCone,
    ExplicitGraph,
    FiniteSelection,
    GeneralizedEquation,
    KktCone,
    NonnegativeOrthant,
    PolyhedralNormalCone,
    SmoothMap,
    ZeroMap,
)
from .nlp import KktPoint, NlpProblem
from .numerics import CapExceeded
from .ocp import ControlProblem
from .poly import Polynomial
from .polyhedral import Box, Polyhedron, polyhedral_cone


class ProblemFileError(ValueError):
    """Malformed or schema-violating problem file."""


_NUM = {"oneOf": [{"type": "number"}, {"enum": ["inf", "-inf"]}]}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}
_TERM = {
    "type": "array",
    "prefixItems": [{"type": "number"}, {"type": "array", "items": {"type": "integer", "minimum": 0}}],
    "minItems": 2,
    "maxItems": 2,
}
_POLY = {"type": "array", "items": _TERM}
_POLY_VEC = {"type": "array", "items": _POLY, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_SMOOTH = {
    "oneOf": [
        _obj({"builtin": {"type": "string"}}, ["builtin"]),
        _obj({"polynomial": _POLY_VEC}, ["polynomial"]),
        _obj({"linear": _obj({"M": _MAT, "c": _VEC}, ["M"])}, ["linear"]),
    ]
}

_SET = {
    "oneOf": [
        _obj({"zero": {"const": True}}, ["zero"]),
        _obj({"box": _obj({"lower": _VEC, "upper": _VEC}, ["lower", "upper"])}, ["box"]),
        _obj({"polyhedron": _obj({"A": _MAT, "b": _VEC, "E": _MAT, "e": _VEC})}, ["polyhedron"]),
        _obj({"kkt": _obj({"s": {"type": "integer", "minimum": 0},
                           "m": {"type": "integer", "minimum": 0}}, ["s", "m"])}, ["kkt"]),
        _obj({"orthant": {"type": "integer", "minimum": 1}}, ["orthant"]),
        _obj({"selection": {"type": "array", "items": _POLY_VEC, "minItems": 1}}, ["selection"]),
        _obj({"graph": {"type": "array", "minItems": 1,
                        "items": {"type": "array", "prefixItems": [_VEC, _VEC],
                                  "minItems": 2, "maxItems": 2}}}, ["graph"]),
    ]
}

_COMMON = {"kind": {"type": "string"}, "name": {"type": "string"}, "description": {"type": "string"}}

_GEQ = _obj(
    {**_COMMON, "kind": {"const": "geq"}, "dim": {"type": "integer", "minimum": 1},
     "smooth": _SMOOTH, "set": _SET, "reference_point": _VEC, "reference_value": _VEC, "x0": _VEC},
    ["kind", "dim", "smooth", "set"],
)

_NLP = _obj(
    {**_COMMON, "kind": {"const": "nlp"}, "n": {"type": "integer", "minimum": 1},
     "s": {"type": "integer", "minimum": 0}, "objective": _POLY,
     "constraints": {"type": "array", "items": _POLY},
     "point": _obj({"x": _VEC, "y": _VEC}, ["x", "y"])},
    ["kind", "n", "objective", "constraints"],
)

_OCP = {
    "oneOf": [
        _obj({**_COMMON, "kind": {"const": "ocp"}, "builtin": {"enum": ["F8", "LQ", "constant"]}},
             ["kind", "builtin"]),
        _obj({**_COMMON, "kind": {"const": "ocp"}, "n": {"type": "integer", "minimum": 1},
              "m": {"type": "integer", "minimum": 1}, "phi": _POLY, "g": {"type": "array", "items": _POLY},
              "U": _obj({"lower": _VEC, "upper": _VEC}, ["lower", "upper"])},
             ["kind", "n", "m", "phi", "g", "U"]),
    ]
}

_LINEAR = _obj(
    {**_COMMON, "kind": {"const": "linear"}, "A": _MAT,
     "K": _obj({"A": _MAT, "E": _MAT})},
    ["kind", "A"],
)

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "subreg problem file",
    "oneOf": [_GEQ, _NLP, _OCP, _LINEAR],
}

KINDS = ("geq", "nlp", "ocp", "linear")


def _builtin_smooth():
    from .nlp import kkt_generalized_equation

    p7, pt7 = fixtures.f7()
    pc, ptc = fixtures.circle_nlp()
    table = {fx.name: fx.ge.smooth for fx in fixtures.newton_fixtures()}
    table["f7-kkt"] = kkt_generalized_equation(p7, pt7).smooth
    table["circle-kkt"] = kkt_generalized_equation(pc, ptc).smooth
    table["cube"] = fixtures.cube().smooth
    return table


BUILTIN_SMOOTH = (
    "x^2-1", "exp-2", "planar", "box-vi", "box-vi-upper", "circle-kkt", "f7-kkt", "cube",
)


# --- validation -------------------------------------------------------------------


def _num(v):
    if v == "inf":
        return np.inf
    if v == "-inf":
        return -np.inf
    return float(v)


def _vec(v):
    return np.array([_num(a) for a in v], dtype=float)


def _mat(M, cols=None):
    if not M:
        return np.zeros((0, cols or 0))
    return np.array([[_num(a) for a in row] for row in M], dtype=float)


def validate(doc):
    """Raise ``ProblemFileError`` unless ``doc`` satisfies the schema."""
    if not isinstance(doc, dict) or doc.get("kind") not in KINDS:
        kind = doc.get("kind") if isinstance(doc, dict) else None
        raise ProblemFileError(f"unknown or missing kind {kind!r}; expected one of {', '.join(KINDS)}")
    sub = {"geq": _GEQ, "nlp": _NLP, "ocp": _OCP, "linear": _LINEAR}[doc["kind"]]
    try:
        jsonschema.validate(doc, sub, cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemFileError(f"schema violation at {path}: {exc.message}") from None
    return doc


def load(path):
    """Read and validate a problem file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"malformed JSON: {exc}") from None
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from None
    return validate(doc)


# --- construction -----------------------------------------------------------------


def _poly_map(tables, dim):
    polys = [Polynomial.from_json(dim, t) for t in tables]
    return SmoothMap(
        lambda x: np.array([p(x) for p in polys]),
        dim,
        len(polys),
        jac=lambda x: np.array([p.gradient(x) for p in polys]).reshape(len(polys), dim),
        name="polynomial",
    )


def build_smooth(block, dim):
    if "builtin" in block:
        table = _builtin_smooth()
        name = block["builtin"]
        if name not in table:
            raise ProblemFileError(f"unknown builtin map {name!r}; known: {', '.join(sorted(table))}")
        f = table[name]
    elif "polynomial" in block:
        f = _poly_map(block["polynomial"], dim)
    else:
        M = _mat(block["linear"]["M"])
        f = SmoothMap.linear(M, _vec(block["linear"]["c"]) if "c" in block["linear"] else None)
    if (f.dim_in, f.dim_out) != (dim, dim):
        raise ProblemFileError(f"smooth map is {f.dim_out}x{f.dim_in}, expected {dim}x{dim}")
    return f


def build_set(block, dim):
    if "zero" in block:
        return ZeroMap()
    if "box" in block:
        box = Box(_vec(block["box"]["lower"]), _vec(block["box"]["upper"]))
        if box.dim != dim:
            raise ProblemFileError("box dimension does not match dim")
        return BoxNormalCone(box)
    if "polyhedron" in block:
        b = block["polyhedron"]
        try:
            P = Polyhedron.from_constraints(dim, A=b.get("A"), b=b.get("b"), E=b.get("E"), e=b.get("e"))
        except ValueError as exc:
            raise ProblemFileError(f"bad polyhedron: {exc}") from None
        return PolyhedralNormalCone(P)
    if "kkt" in block:
        return KktCone(block["kkt"]["s"], block["kkt"]["m"])
    if "orthant" in block:
        return NonnegativeOrthant(block["orthant"])
    if "selection" in block:
        return FiniteSelection([_poly_map(t, dim) for t in block["selection"]])
    return ExplicitGraph([(_vec(x), _vec(y)) for x, y in block["graph"]])


def build_geq(doc) -> GeneralizedEquation:
    dim = doc["dim"]
    f = build_smooth(doc["smooth"], dim)
    F = build_set(doc["set"], dim)
    try:
        return GeneralizedEquation(
            f, F,
            reference_point=_vec(doc["reference_point"]) if "reference_point" in doc else None,
            reference_value=_vec(doc["reference_value"]) if "reference_value" in doc else None,
        )
    except CapExceeded:
        raise
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None


def affine_data(doc):
    """``(M, c)`` for a ``geq`` file whose smooth part is linear."""
    block = doc["smooth"]
    if "linear" not in block:
        raise ProblemFileError("polyhedral analysis needs a linear smooth part")
    M = _mat(block["linear"]["M"])
    c = _vec(block["linear"].get("c", [0.0] * M.shape[0]))
    return M, c


def selection_pieces(doc):
    """Linear pieces ``(A, c)`` of a selection whose members are affine polynomials."""
    dim = doc["dim"]
    pieces = []
    for tables in doc["set"]["selection"]:
        A = np.zeros((len(tables), dim))
        c = np.zeros(len(tables))
        for i, t in enumerate(tables):
            for coef, e in t:
                if sum(e) == 0:
                    c[i] += coef
                elif sum(e) == 1:
                    A[i, int(np.argmax(e))] += coef
                else:
                    raise ProblemFileError("selection member is not affine")
        pieces.append((A, c))
    return pieces


def build_nlp(doc):
    n = doc["n"]
    obj = Polynomial.from_json(n, doc["objective"])
    cons = [Polynomial.from_json(n, t) for t in doc["constraints"]]
    s = doc.get("s", 0)
    if s > len(cons):
        raise ProblemFileError("more equality constraints than constraints")
    prob = NlpProblem.from_polynomials(n, s, obj, cons, name=doc.get("name"))
    pt = None
    if "point" in doc:
        pt = KktPoint(_vec(doc["point"]["x"]), _vec(doc["point"]["y"]))
    return prob, pt


def build_ocp(doc) -> ControlProblem:
    if "builtin" in doc:
        return {"F8": fixtures.f8, "LQ": fixtures.lq_ocp, "constant": fixtures.constant_solution_ocp}[doc["builtin"]]()
    n, m = doc["n"], doc["m"]
    if len(doc["g"]) != n:
        raise ProblemFileError(f"need {n} dynamics components")
    U = Box(_vec(doc["U"]["lower"]), _vec(doc["U"]["upper"]))
    return ControlProblem.from_polynomials(
        n, m, Polynomial.from_json(n + m, doc["phi"]),
        [Polynomial.from_json(n + m, t) for t in doc["g"]], U, name=doc.get("name", "ocp"),
    )


def build_linear(doc):
    A = _mat(doc["A"])
    K = None
    if "K" in doc:
        n = A.shape[1]
        G = _mat(doc["K"].get("A", []), n)
        E = _mat(doc["K"].get("E", []), n)
        K = polyhedral_cone(n, A=G if G.size else None, E=E if E.size else None)
    return A, K
