"""Scenario files: JSON declarations of spaces, manifolds, fields, forms and checks.

A scenario is validated in two passes.  The JSON schema below fixes the
shape of the document; :func:`load_scenario` then resolves names and parses
expressions, reporting any problem as a :class:`ScenarioError` carrying a
JSON-path style location such as ``forms.theta.ambient.2[0]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .chart_atlas import (
    CATALOG,
    AtlasError,
    Manifold,
    Support,
    catalog_manifold,
    manifold_from_dict,
)
from .exprs import ExprSyntaxError, parse
from .forms import Form, form, from_ambient
from .integrate import DEFAULT_ORDER
from .tensor_fields import SMOOTH, FieldError, SmoothMap, TensorField, field_from_ambient, tensor_field
from .value_space import COMPLEX, REAL, LinearMap, ValueSpace, scalar_space

SCENARIO_PACKAGE = "gforms.scenarios"

CHECK_KINDS = (
    "dd_zero",
    "leibniz",
    "wedge_commutativity",
    "pushforward_naturality",
    "pullback_naturality",
    "tensor_overlap_compat",
    "partition_sum",
    "cover_independence",
    "weak_integral_pushforward",
    "measure_linearity",
    "partition_additivity",
    "stokes",
    "orientation",
    "integral",
    "quadrature_oracle",
    "fd_gradient",
)

_BOX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
_SUPPORT = {
    "oneOf": [
        _BOX,
        {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"chart": {"type": ["string", "null"]}, "box": _BOX},
                "required": ["box"],
                "additionalProperties": False,
            },
        },
    ]
}
_TABLE = {"type": "object", "additionalProperties": {"type": "array"}}

SCHEMA: dict[str, Any] = {
    "$defs": {
        "manifold": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "properties": {
                        "catalog": {"type": "string"},
                        "flip": {"type": "array", "items": {"type": "string"}},
                    },
                    "required": ["catalog"],
                    "additionalProperties": False,
                },
                {"type": "object", "required": ["dim", "ambient_dim", "charts"]},
            ]
        },
    },
    "type": "object",
    "required": ["id", "manifold", "checks"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "manifold": {"$ref": "#/$defs/manifold"},
        "manifolds": {"type": "object", "additionalProperties": {"$ref": "#/$defs/manifold"}},
        "order": {"type": "integer", "minimum": 1},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "spaces": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["scalar", "dim"],
                "additionalProperties": False,
                "properties": {
                    "scalar": {"enum": [REAL, COMPLEX]},
                    "dim": {"type": "integer", "minimum": 1},
                    "labels": {"type": "array", "items": {"type": "string"}},
                    "dual": {"type": "array", "items": {"type": "array"}},
                },
            },
        },
        "maps": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["source", "target"],
                "additionalProperties": False,
                "properties": {
                    "source": {"type": "string"},
                    "target": {"type": "string"},
                    "matrix": {"type": "array", "items": {"type": "array"}},
                    "real_matrix": {"type": "array", "items": {"type": "array"}},
                },
            },
        },
        "smooth_maps": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["pieces"],
                "additionalProperties": False,
                "properties": {
                    "manifold": {"type": "string"},
                    "pieces": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["target", "exprs"],
                            "additionalProperties": False,
                            "properties": {
                                "target": {"type": "string"},
                                "exprs": {"type": "array", "items": {"type": "string"}},
                            },
                        },
                    }
                },
            },
        },
        "forms": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["degree"],
                "additionalProperties": False,
                "properties": {
                    "manifold": {"type": "string"},
                    "degree": {"type": "integer", "minimum": 0},
                    "space": {"type": "string"},
                    "kind": {"enum": ["smooth", "integrable"]},
                    "ambient": _TABLE,
                    "charts": {"type": "object", "additionalProperties": _TABLE},
                    "support": _SUPPORT,
                },
            },
        },
        "fields": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["r", "s"],
                "additionalProperties": False,
                "properties": {
                    "manifold": {"type": "string"},
                    "r": {"type": "integer", "minimum": 0},
                    "s": {"type": "integer", "minimum": 0},
                    "space": {"type": "string"},
                    "kind": {"enum": ["smooth", "integrable"]},
                    "ambient": _TABLE,
                    "charts": {"type": "object", "additionalProperties": _TABLE},
                    "support": _SUPPORT,
                },
            },
        },
        "partitions": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "manifold": {"type": "string"},
                    "charts": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "margin": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.45},
                    "support": _SUPPORT,
                },
            },
        },
        "checks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": list(CHECK_KINDS)},
                    "name": {"type": "string"},
                    "tolerance": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}


class ScenarioError(ValueError):
    """A scenario that is not valid JSON, breaks the schema, or names unknown objects."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
        self.message = message


@dataclass
class Scenario:
    id: str
    description: str
    manifold: Manifold
    order: int
    samples: int
    seed: int
    spaces: dict[str, ValueSpace]
    maps: dict[str, LinearMap]
    smooth_maps: dict[str, SmoothMap]
    forms: dict[str, Form]
    fields: dict[str, TensorField]
    partitions: dict[str, dict]
    checks: list[dict]
    manifolds: dict[str, Manifold] = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)


def _loc(*parts) -> str:
    out = ""
    for p in parts:
        if isinstance(p, int):
            out += f"[{p}]"
        else:
            out += f".{p}" if out else str(p)
    return out


def _index_key(key: str, where: str) -> tuple[int, ...]:
    key = key.strip()
    if not key:
        return ()
    try:
        return tuple(int(t) for t in key.split(","))
    except ValueError:
        raise ScenarioError(where, f"index key {key!r} is not a comma separated list of integers") from None


def _tensor_key(key: str, where: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if "|" not in key:
        raise ScenarioError(where, f"tensor index key {key!r} must look like 'upper|lower'")
    up, low = key.split("|", 1)
    return _index_key(up, where), _index_key(low, where)


def _scalar(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ScenarioError(where, "matrix entries are numbers or [re, im] pairs")


def _matrix(rows, where: str) -> np.ndarray:
    vals = [[_scalar(v, _loc(where, i, j)) for j, v in enumerate(row)] for i, row in enumerate(rows)]
    widths = {len(r) for r in vals}
    if len(widths) > 1:
        raise ScenarioError(where, "matrix rows differ in length")
    return np.array(vals)


def _check_exprs(values, arity: int, where: str) -> None:
    """Parse every expression string in a (possibly nested) value list."""
    for i, v in enumerate(values):
        if isinstance(v, list):
            _check_exprs(v, arity, _loc(where, i))
        elif isinstance(v, str):
            try:
                parse(v, arity)
            except ExprSyntaxError as exc:
                raise ScenarioError(_loc(where, i), f"{exc} in {v!r}") from None
        elif not isinstance(v, (int, float)):
            raise ScenarioError(_loc(where, i), "coefficients are expression strings or numbers")


def _support(raw, M: Manifold, where: str) -> Support | None:
    if raw is None:
        return None
    if raw and isinstance(raw[0], dict):
        pieces = []
        for i, p in enumerate(raw):
            cid = p.get("chart")
            if cid is not None and cid not in M.chart_ids:
                raise ScenarioError(_loc(where, i, "chart"), f"unknown chart {cid!r}")
            want = M.ambient_dim if cid is None else M.dim
            if len(p["box"]) != want:
                raise ScenarioError(_loc(where, i, "box"), f"box needs {want} intervals")
            pieces.append((cid, tuple(tuple(iv) for iv in p["box"])))
        return Support(tuple(pieces))
    if len(raw) != M.ambient_dim:
        raise ScenarioError(where, f"ambient support box needs {M.ambient_dim} intervals")
    return Support.ambient(raw)


def _manifold(raw, where: str) -> Manifold:
    try:
        if isinstance(raw, str):
            return catalog_manifold(raw)
        if "catalog" in raw:
            M = catalog_manifold(raw["catalog"])
            for cid in raw.get("flip", []):
                M = M.with_gamma(cid, -M.chart(cid).gamma)
            return M
        return manifold_from_dict(raw)
    except (AtlasError, ExprSyntaxError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(where, str(exc)) from None


def _space(name: str, spaces: dict, where: str) -> ValueSpace:
    if name not in spaces:
        raise ScenarioError(where, f"unknown value space {name!r}")
    return spaces[name]


def _form(name: str, raw: dict, M: Manifold, spaces: dict) -> Form:
    where = _loc("forms", name)
    space = _space(raw.get("space", "R"), spaces, _loc(where, "space"))
    deg = raw["degree"]
    if deg > M.dim:
        raise ScenarioError(_loc(where, "degree"), f"degree {deg} exceeds manifold dimension {M.dim}")
    if ("ambient" in raw) == ("charts" in raw):
        raise ScenarioError(where, "give exactly one of 'ambient' or 'charts'")
    support = _support(raw.get("support"), M, _loc(where, "support"))
    kind = raw.get("kind", SMOOTH)
    try:
        if "ambient" in raw:
            table = {}
            for key, vals in raw["ambient"].items():
                I = _index_key(key, _loc(where, "ambient", key))
                if len(I) != deg or any(i < 1 or i > M.ambient_dim for i in I):
                    raise ScenarioError(_loc(where, "ambient", key), f"not a degree-{deg} index on R^{M.ambient_dim}")
                _check_exprs(vals, M.ambient_dim, _loc(where, "ambient", key))
                table[I] = vals
            return from_ambient(M, deg, space, table, kind, support)
        tables = {}
        for cid, t in raw["charts"].items():
            if cid not in M.chart_ids:
                raise ScenarioError(_loc(where, "charts", cid), f"unknown chart {cid!r}")
            tables[cid] = {}
            for key, vals in t.items():
                I = _index_key(key, _loc(where, "charts", cid, key))
                if len(I) != deg or list(I) != sorted(set(I)) or any(i < 1 or i > M.dim for i in I):
                    raise ScenarioError(_loc(where, "charts", cid, key), f"not an increasing degree-{deg} index")
                _check_exprs(vals, M.dim, _loc(where, "charts", cid, key))
                tables[cid][I] = vals
        return form(M, deg, space, tables, kind, support)
    except (FieldError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(where, str(exc)) from None


def _field(name: str, raw: dict, M: Manifold, spaces: dict) -> TensorField:
    where = _loc("fields", name)
    space = _space(raw.get("space", "R"), spaces, _loc(where, "space"))
    r, s = raw["r"], raw["s"]
    support = _support(raw.get("support"), M, _loc(where, "support"))
    kind = raw.get("kind", SMOOTH)
    if ("ambient" in raw) == ("charts" in raw):
        raise ScenarioError(where, "give exactly one of 'ambient' or 'charts'")
    try:
        if "ambient" in raw:
            table = {}
            for key, vals in raw["ambient"].items():
                table[_tensor_key(key, _loc(where, "ambient", key))] = vals
                _check_exprs(vals, M.ambient_dim, _loc(where, "ambient", key))
            return field_from_ambient(M, r, s, space, table, kind, support)
        tables = {}
        for cid, t in raw["charts"].items():
            if cid not in M.chart_ids:
                raise ScenarioError(_loc(where, "charts", cid), f"unknown chart {cid!r}")
            tables[cid] = {}
            for key, vals in t.items():
                _check_exprs(vals, M.dim, _loc(where, "charts", cid, key))
                tables[cid][_tensor_key(key, _loc(where, "charts", cid, key))] = vals
        return tensor_field(M, r, s, space, tables, kind, support)
    except (FieldError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(where, str(exc)) from None


def _smooth_map(name: str, raw: dict, M: Manifold) -> SmoothMap:
    where = _loc("smooth_maps", name)
    pieces = {}
    for cid, p in raw["pieces"].items():
        if cid not in M.chart_ids:
            raise ScenarioError(_loc(where, "pieces", cid), f"unknown chart {cid!r}")
        if p["target"] not in M.chart_ids:
            raise ScenarioError(_loc(where, "pieces", cid, "target"), f"unknown chart {p['target']!r}")
        _check_exprs(p["exprs"], M.dim, _loc(where, "pieces", cid, "exprs"))
        pieces[cid] = (p["target"], tuple(parse(e, M.dim) for e in p["exprs"]))
    try:
        return SmoothMap(M, M, pieces)
    except (FieldError, AtlasError) as exc:
        raise ScenarioError(where, str(exc)) from None


def _linear_map(name: str, raw: dict, spaces: dict) -> LinearMap:
    where = _loc("maps", name)
    src = _space(raw["source"], spaces, _loc(where, "source"))
    tgt = _space(raw["target"], spaces, _loc(where, "target"))
    try:
        if "matrix" in raw:
            return LinearMap(src, tgt, _matrix(raw["matrix"], _loc(where, "matrix")))
        if "real_matrix" in raw:
            return LinearMap.real_linear(src, tgt, _matrix(raw["real_matrix"], _loc(where, "real_matrix")).real)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(where, str(exc)) from None
    raise ScenarioError(where, "give 'matrix' or 'real_matrix'")


def _value_space(name: str, raw: dict) -> ValueSpace:
    where = _loc("spaces", name)
    try:
        dual = _matrix(raw["dual"], _loc(where, "dual")) if "dual" in raw else None
        return ValueSpace(name, raw["scalar"], raw["dim"], tuple(raw.get("labels", ())), dual)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(where, str(exc)) from None


def _references(checks: list[dict], sc: dict) -> None:
    """Every string or string list under a known reference key must name a declared object."""
    ref_keys = {
        "form": "forms", "forms": "forms", "left": "forms", "right": "forms",
        "map": "maps", "maps": "maps", "second_map": "maps",
        "smooth_map": "smooth_maps", "field": "fields", "fields": "fields",
        "partition": "partitions", "partitions": "partitions", "integration_partition": "partitions",
    }
    for i, chk in enumerate(checks):
        for key, section in ref_keys.items():
            if key not in chk:
                continue
            vals = chk[key]
            flat = vals if isinstance(vals, list) else [vals]
            for j, v in enumerate(flat):
                items = v if isinstance(v, list) else [v]
                for name in items:
                    where = _loc("checks", i, key) if not isinstance(vals, list) else _loc("checks", i, key, j)
                    if not isinstance(name, str) or name not in sc.get(section, {}):
                        raise ScenarioError(where, f"unknown {section[:-1].replace('_', ' ')} {name!r}")


def parse_scenario(doc: dict) -> Scenario:
    """Validate a decoded scenario document and build its objects."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise ScenarioError(_loc(*err.absolute_path) or "<root>", err.message)
    M = _manifold(doc["manifold"], "manifold")
    manifolds = {"main": M}
    for name, raw in doc.get("manifolds", {}).items():
        if name == "main":
            raise ScenarioError("manifolds.main", "'main' names the scenario manifold")
        manifolds[name] = _manifold(raw, _loc("manifolds", name))

    def on(section: str, name: str, raw: dict) -> Manifold:
        key = raw.get("manifold", "main")
        if key not in manifolds:
            raise ScenarioError(_loc(section, name, "manifold"), f"unknown manifold {key!r}")
        return manifolds[key]

    spaces = {"R": scalar_space(REAL), "C": scalar_space(COMPLEX)}
    for name, raw in doc.get("spaces", {}).items():
        spaces[name] = _value_space(name, raw)
    maps = {n: _linear_map(n, r, spaces) for n, r in doc.get("maps", {}).items()}
    smooth_maps = {n: _smooth_map(n, r, on("smooth_maps", n, r)) for n, r in doc.get("smooth_maps", {}).items()}
    forms = {n: _form(n, r, on("forms", n, r), spaces) for n, r in doc.get("forms", {}).items()}
    fields = {n: _field(n, r, on("fields", n, r), spaces) for n, r in doc.get("fields", {}).items()}
    partitions = {}
    for n, r in doc.get("partitions", {}).items():
        where = _loc("partitions", n)
        PM = on("partitions", n, r)
        for j, cid in enumerate(r.get("charts", [])):
            if cid not in PM.chart_ids:
                raise ScenarioError(_loc(where, "charts", j), f"unknown chart {cid!r}")
        partitions[n] = {
            "manifold": PM,
            "charts": r.get("charts"),
            "margin": r.get("margin", 0.05),
            "support": _support(r.get("support"), PM, _loc(where, "support")),
        }
    checks = [dict(c) for c in doc["checks"]]
    _references(checks, doc)
    for i, chk in enumerate(checks):
        if "manifold" in chk and chk["manifold"] not in manifolds:
            raise ScenarioError(_loc("checks", i, "manifold"), f"unknown manifold {chk['manifold']!r}")
    return Scenario(
        id=doc["id"],
        description=doc.get("description", ""),
        manifold=M,
        order=doc.get("order", DEFAULT_ORDER),
        samples=doc.get("samples", 100),
        seed=doc.get("seed", 0),
        spaces=spaces,
        maps=maps,
        smooth_maps=smooth_maps,
        forms=forms,
        fields=fields,
        partitions=partitions,
        checks=checks,
        manifolds=manifolds,
        source=doc,
    )


def decode(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", f"malformed JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "a scenario is a JSON object")
    return doc


def bundled_names() -> list[str]:
    files = resources.files(SCENARIO_PACKAGE).iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def bundled_text(name: str) -> str:
    return resources.files(SCENARIO_PACKAGE).joinpath(f"{name}.json").read_text(encoding="utf-8")


def read_scenario_text(ref: str) -> str:
    """Text of a scenario given a file path or the name of a bundled scenario."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in bundled_names():
        return bundled_text(name)
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")


def load_scenario(ref: str) -> Scenario:
    return parse_scenario(decode(read_scenario_text(ref)))


def catalog_listing() -> list[tuple[str, str]]:
    """``(name, description)`` for catalog manifolds and bundled scenarios, sorted."""
    rows = [(f"manifold:{n}", CATALOG[n]().description) for n in sorted(CATALOG)]
    for n in bundled_names():
        doc = json.loads(bundled_text(n))
        rows.append((f"scenario:{n}", doc.get("description", "")))
    return rows


__all__ = [
    "CHECK_KINDS",
    "SCHEMA",
    "Scenario",
    "ScenarioError",
    "bundled_names",
    "catalog_listing",
    "decode",
    "load_scenario",
    "parse_scenario",
    "read_scenario_text",
]
