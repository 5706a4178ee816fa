"""Field files: a JSON document listing monomial records per component of ``A``.

::

    {
      "format": "magwell-field-v1",
      "domain_box": [[-8, 8], [-8, 8], [-8, 8]],
      "A": {
        "A1": [],
        "A2": [{"exponents": [1, 0, 0], "coeff": 1},
               {"exponents": [3, 0, 0], "coeff": "1/3"}],
        "A3": []
      }
    }

Coefficients are JSON numbers or strings holding a decimal or a fraction;
both are read exactly.  ``domain_box`` is optional.  Syntax errors report
line and column; structural errors report the path of the offending entry.
"""
from __future__ import annotations

import json
from fractions import Fraction

from .errors import DegreeOverflowError, FieldParseError
from .field import (
    PolyVecField,
    anisotropic_model_field,
    isotropic_model_field,
    perturbed_model_field,
    skew_model_field,
)
from .polynomial import MAX_DEGREE, Poly3, as_number

FORMAT = "magwell-field-v1"
COMPONENTS = ("A1", "A2", "A3")

BUILTIN = {
    "isotropic": isotropic_model_field,
    "anisotropic": anisotropic_model_field,
    "skew": skew_model_field,
    "perturbed": perturbed_model_field,
    "constant": lambda: PolyVecField((Poly3(), Poly3({(1, 0, 0): 1}), Poly3())),
}


def _fail(message, path):
    raise FieldParseError(f"{message} at {path}")


def _coeff(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
        _fail(f"coefficient must be a number or a numeric string, got {value!r}", path)
    try:
        return as_number(value)
    except (ValueError, ZeroDivisionError):
        _fail(f"cannot read coefficient {value!r}", path)


def _component(records, path, max_degree):
    if not isinstance(records, list):
        _fail("expected a list of monomial records", path)
    terms = {}
    for i, rec in enumerate(records):
        where = f"{path}[{i}]"
        if not isinstance(rec, dict) or set(rec) != {"exponents", "coeff"}:
            _fail('a monomial record has exactly the keys "exponents" and "coeff"', where)
        e = rec["exponents"]
        if (not isinstance(e, list) or len(e) != 3
                or any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in e)):
            _fail("exponents must be three non-negative integers", f"{where}.exponents")
        if sum(e) > max_degree:
            raise DegreeOverflowError(
                f"monomial of degree {sum(e)} exceeds the cap {max_degree} at {where}")
        key = tuple(e)
        terms[key] = terms.get(key, 0) + _coeff(rec["coeff"], f"{where}.coeff")
    return Poly3(terms)


def _box(value, path):
    if (not isinstance(value, list) or len(value) != 3
            or any(not isinstance(p, list) or len(p) != 2 for p in value)):
        _fail("expected three [lo, hi] pairs", path)
    try:
        box = tuple((float(lo), float(hi)) for lo, hi in value)
    except (TypeError, ValueError):
        _fail("box bounds must be numbers", path)
    if any(hi <= lo for lo, hi in box):
        _fail("every box interval needs lo < hi", path)
    return box


def parse_field(text, max_degree=MAX_DEGREE) -> PolyVecField:
    """Build a :class:`PolyVecField` from the text of a field file."""
    try:
        doc = json.loads(text, parse_float=Fraction, parse_int=int)
    except json.JSONDecodeError as e:
        raise FieldParseError(e.msg, line=e.lineno, column=e.colno) from None
    if not isinstance(doc, dict):
        raise FieldParseError("a field file holds a JSON object", line=1, column=1)
    fmt = doc.get("format", FORMAT)
    if fmt != FORMAT:
        _fail(f"unknown format {fmt!r}", "format")
    unknown = set(doc) - {"format", "domain_box", "A", "description"}
    if unknown:
        _fail(f"unknown keys {sorted(unknown)}", "<root>")
    if "A" not in doc:
        _fail('missing key "A"', "<root>")
    A = doc["A"]
    if isinstance(A, dict):
        if set(A) - set(COMPONENTS):
            _fail(f"components are named {list(COMPONENTS)}", "A")
        comps = [_component(A.get(c, []), f"A.{c}", max_degree) for c in COMPONENTS]
    elif isinstance(A, list) and len(A) == 3:
        comps = [_component(c, f"A[{i}]", max_degree) for i, c in enumerate(A)]
    else:
        _fail("expected an object with keys A1, A2, A3 or a list of three components", "A")
    kwargs = {"max_degree": max_degree}
    if "domain_box" in doc:
        kwargs["domain_box"] = _box(doc["domain_box"], "domain_box")
    return PolyVecField(tuple(comps), **kwargs)


def load_field(spec, max_degree=MAX_DEGREE) -> PolyVecField:
    """Read a field file, or a built-in model given as ``builtin:NAME``."""
    spec = str(spec)
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise FieldParseError(f"unknown built-in field {name!r}; choose from {sorted(BUILTIN)}")
        return BUILTIN[name]()
    try:
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise FieldParseError(f"cannot read field file {spec!r}: {e.strerror}") from None
    return parse_field(text, max_degree)


def _coeff_text(c):
    if isinstance(c, Fraction):
        return str(c) if c.denominator != 1 else int(c.numerator)
    return float(c)


def field_to_text(field: PolyVecField) -> str:
    """Serialize a field to the file format, one monomial record per line."""
    lines = ["{", f'  "format": "{FORMAT}",',
             '  "domain_box": ' + json.dumps([list(p) for p in field.domain_box]) + ",",
             '  "A": {']
    for i, (name, comp) in enumerate(zip(COMPONENTS, field.A)):
        recs = [json.dumps({"exponents": list(e), "coeff": _coeff_text(c)})
                for e, c in sorted(comp.items())]
        end = "," if i < 2 else ""
        if recs:
            lines.append(f'    "{name}": [')
            lines += [f"      {r}," for r in recs[:-1]] + [f"      {recs[-1]}"]
            lines.append(f"    ]{end}")
        else:
            lines.append(f'    "{name}": []{end}')
    lines += ["  }", "}"]
    return "\n".join(lines) + "\n"
