"""JSON interchange for series, jets, matrices and solver inputs.

Rationals travel as decimal-free strings like "3/4" or "-2"; a series is

    {"vars": [...], "offset": {...}, "trunc": {...}, "logmax": {...},
     "terms": [{"n": [...], "l": [...], "c": "p/q" | [..] | [[..]]}]}

with vector and matrix coefficients as (nested) lists of rational strings.
Emitted documents are canonical: sorted keys, sorted terms, one trailing
newline, so identical inputs give byte-identical artifacts.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .fuchs import FuchsSystem
from .linalg import QMat, QVec, format_rational, parse_rational
from .series import CoordJet, TruncSeries

Q = Fraction


class SchemaError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _req(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaError(f"{path}.{key}", "missing field")
    return obj[key]


def value_to_json(v):
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, QVec):
        return [format_rational(x) for x in v.to_list()]
    if isinstance(v, QMat):
        return [[format_rational(x) for x in row] for row in v.to_rows()]
    raise TypeError(f"unsupported coefficient {type(v)}")


def value_from_json(c, path: str):
    if isinstance(c, str):
        try:
            return parse_rational(c)
        except ValueError as e:
            raise SchemaError(path, str(e)) from None
    if isinstance(c, list):
        if c and isinstance(c[0], list):
            return QMat.from_rows([[parse_rational(x) for x in row] for row in c])
        return QVec.from_list([parse_rational(x) for x in c])
    raise SchemaError(path, "coefficient must be a rational string or (nested) list")


def series_to_json(s: TruncSeries) -> dict:
    terms = []
    for (exps, logs), val in sorted(s.terms.items()):
        terms.append({"n": list(exps), "l": list(logs), "c": value_to_json(val)})
    return {
        "vars": list(s.vars),
        "offset": {v: format_rational(o) for v, o in zip(s.vars, s.offset)},
        "trunc": {v: t for v, t in zip(s.vars, s.trunc)},
        "logmax": {v: m for v, m in zip(s.vars, s.logmax)},
        "terms": terms,
    }


def series_from_json(obj: dict, path: str = "series") -> TruncSeries:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    vars_ = _req(obj, "vars", path)
    trunc = {v: int(t) for v, t in _req(obj, "trunc", path).items()}
    offset = {v: parse_rational(o) for v, o in obj.get("offset", {}).items()}
    logmax = {v: int(m) for v, m in obj.get("logmax", {}).items()}
    s = TruncSeries(tuple(vars_), trunc, offset=offset, logmax=logmax)
    for i, term in enumerate(obj.get("terms", [])):
        tp = f"{path}.terms[{i}]"
        exps = tuple(int(x) for x in _req(term, "n", tp))
        logs = tuple(int(x) for x in _req(term, "l", tp))
        s._store(exps, logs, value_from_json(_req(term, "c", tp), f"{tp}.c"))
    return s


def jet_to_json(j: CoordJet) -> dict:
    return {"taylor": [format_rational(c) for c in j.coeffs], "exact": j.exact}


def jet_from_json(obj: dict, path: str = "jet") -> CoordJet:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    taylor = _req(obj, "taylor", path)
    if not taylor:
        raise SchemaError(f"{path}.taylor", "empty jet")
    return CoordJet([parse_rational(c) for c in taylor], exact=bool(obj.get("exact", False)))


def matrix_to_json(m: QMat, labels: Optional[List[str]] = None) -> dict:
    out = {
        "shape": [m.nrows, m.ncols],
        "entries": [
            {"i": i, "j": j, "c": format_rational(v)}
            for i, row in sorted(m.rows.items())
            for j, v in sorted(row.items())
        ],
    }
    if labels is not None:
        out["basis"] = labels
    return out


def matrix_from_json(obj: dict, path: str = "matrix") -> QMat:
    shape = _req(obj, "shape", path)
    m = QMat(int(shape[0]), int(shape[1]))
    for e in obj.get("entries", []):
        m.set_(int(e["i"]), int(e["j"]), parse_rational(e["c"]))
    return m


def fuchs_system_from_json(obj: dict, path: str = "system") -> Tuple[FuchsSystem, Dict]:
    """Single-variable system {A: [..], omega: [..], tail: {C, a}, seeds: {..}}."""
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    a_raw = _req(obj, "A", path)
    w_raw = _req(obj, "omega", path)
    if not isinstance(a_raw, list) or not isinstance(w_raw, list):
        raise SchemaError(path, "A and omega must be coefficient lists")
    a_coeffs = []
    dim = None
    for k, mat in enumerate(a_raw):
        rows = [[parse_rational(x) for x in row] for row in mat]
        if dim is None:
            dim = len(rows)
        a_coeffs.append(QMat.from_rows(rows))
    w_coeffs = []
    for k, vec in enumerate(w_raw):
        w_coeffs.append(QVec.from_list([parse_rational(x) for x in vec]))
        if dim is None:
            dim = w_coeffs[-1].n
    if dim is None:
        raise SchemaError(path, "need at least one coefficient")
    tail = None
    if obj.get("tail") is not None:
        t = obj["tail"]
        tail = (parse_rational(str(t["C"])), parse_rational(str(t["a"])))
    seeds = {}
    for key, val in obj.get("seeds", {}).items():
        parts = key.split(",")
        if len(parts) != 2:
            raise SchemaError(f"{path}.seeds.{key}", "seed keys are 'n,l'")
        seeds[(int(parts[0]), int(parts[1]))] = [parse_rational(str(x)) for x in val]
    return FuchsSystem.single(a_coeffs, w_coeffs, dim=dim, tail=tail), seeds


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"
