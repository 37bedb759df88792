"""JSON documents for systems and loss parameters, and atomic file output."""

from __future__ import annotations

import contextlib
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .exceptions import DimensionMismatch, SchemaError
from .model import FoLeadLag, LossParams, LtiAdmittance, LtvAdmittanceGrid

_NUMBER_OR_INF = {"oneOf": [{"type": "number"}, {"enum": ["inf", "Infinity"]}]}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_STACK = {"type": "array", "items": _MATRIX}

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["lti", "ltv", "fo"]}},
    "allOf": [
        {"if": {"properties": {"kind": {"const": "lti"}}},
         "then": {"required": ["D"],
                  "properties": {"A": _MATRIX, "B": _MATRIX, "C": _MATRIX, "D": _MATRIX}}},
        {"if": {"properties": {"kind": {"const": "ltv"}}},
         "then": {"required": ["t", "D"],
                  "properties": {"t": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                                 "A": _STACK, "B": _STACK, "C": _STACK, "D": _STACK}}},
        {"if": {"properties": {"kind": {"const": "fo"}}},
         "then": {"required": ["kp", "wL", "wh", "mu"],
                  "properties": {"kp": {"type": "number", "exclusiveMinimum": 0},
                                 "wL": {"type": "number", "exclusiveMinimum": 0},
                                 "wh": {"type": "number", "exclusiveMinimum": 0},
                                 "mu": {"type": "number"}}}},
    ],
}

LOSS_SCHEMA = {
    "type": "object",
    "required": ["R"],
    "properties": {
        "R": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "tau_s": _NUMBER_OR_INF,
        "tau_r": _NUMBER_OR_INF,
        "C_s": {"type": "number", "exclusiveMinimum": 0},
    },
}

BUNDLED = ("building.json", "negcond.json")


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate(doc, schema):
    """Raise :class:`SchemaError` carrying the JSON pointer of the first violation."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise SchemaError(_pointer(best.absolute_path), best.message)


def parse_number(x) -> float:
    """Float with ``"inf"`` accepted as +infinity."""
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(x)


def system_from_dict(doc: dict):
    validate(doc, SYSTEM_SCHEMA)
    kind = doc["kind"]
    try:
        if kind == "lti":
            D = np.asarray(doc["D"], dtype=float)
            if not doc.get("A"):
                return LtiAdmittance.static(D)
            return LtiAdmittance(doc["A"], doc["B"], doc["C"], D)
        if kind == "ltv":
            N = len(doc["t"])
            empty = np.zeros((N, 0, 0))
            return LtvAdmittanceGrid(doc["t"], doc.get("A", empty), doc.get("B", empty),
                                     doc.get("C", empty), doc["D"])
        return FoLeadLag(doc["kp"], doc["wL"], doc["wh"], doc["mu"])
    except DimensionMismatch as exc:
        raise SchemaError("", str(exc)) from None
    except ValueError as exc:
        raise SchemaError("", str(exc)) from None


def loss_from_dict(doc: dict) -> LossParams:
    validate(doc, LOSS_SCHEMA)
    return LossParams(doc["R"], tau_s=parse_number(doc.get("tau_s", math.inf)),
                      tau_r=parse_number(doc.get("tau_r", 0.0)), C_s=float(doc.get("C_s", 1.0)))


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("spsa") / "data" / name))


def resolve_system_path(path: str) -> Path:
    """The given path, or the bundled example of the same file name if it does not exist."""
    p = Path(path)
    if p.exists():
        return p
    if p.name in BUNDLED:
        return bundled_path(p.name)
    raise FileNotFoundError(f"system file not found: {path}")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON in {path}: {exc}") from None


def load_system(path):
    p = resolve_system_path(path)
    return system_from_dict(read_json(p)), p


def load_loss(path) -> LossParams:
    return loss_from_dict(read_json(path))


def to_jsonable(x):
    """Recursively convert numpy values and non-finite floats for JSON output."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@contextlib.contextmanager
def atomic_open(path, mode="w", **kw):
    """Write to a temporary file next to ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        if "b" not in mode:
            kw.setdefault("newline", "")
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_json(path, doc):
    with atomic_open(path, encoding="utf-8") as fh:
        json.dump(to_jsonable(doc), fh, indent=2)
        fh.write("\n")
