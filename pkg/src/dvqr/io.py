"""JSON model document for :class:`~dvqr.dvine.QuantRegModel`.

Layout (version 1)::

    {
      "format": "dvqr-model",
      "version": 1,
      "response": "y",
      "covariates": ["x1", "x2"],
      "criterion": "aic",
      "indep_level": 0.05,
      "margins": [
        {"column": "y", "bandwidth": 0.21, "n": 500,
         "sha256": "<hex digest of the float64 little-endian sample>",
         "sample": [...]},
        ...
      ],
      "vine": {
        "order": [1, 0],
        "trees": [[{"family": "gaussian", "rotation": 0, "params": [0.79]}, ...], ...],
        "cll_path": [...],
        "ll_path": [...]
      }
    }

Margins are listed response first, then covariates in column order.  Floats
are written with Python's shortest round-trip representation, so a parsed
document reproduces every number exactly and re-serializes byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .bicop import BiCop, Criterion, Family
from .dvine import DVineRegression, QuantRegModel
from .margins import KernelMargin

FORMAT = "dvqr-model"
VERSION = 1


class ModelFormatError(ValueError):
    """Malformed or inconsistent model document; ``location`` names the offending field."""

    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location


def sample_digest(sample):
    return hashlib.sha256(np.ascontiguousarray(sample, dtype="<f8").tobytes()).hexdigest()


def _float(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x} cannot be serialized")
    return x


def _margin_doc(name, m):
    return {
        "column": name,
        "bandwidth": _float(m.bandwidth),
        "n": int(m.n),
        "sha256": sample_digest(m.sample),
        "sample": [_float(v) for v in m.sample],
    }


def to_document(model):
    """Plain-dict form of a fitted model."""
    vine = model.vine
    margins = [_margin_doc(model.response, model.response_margin)]
    margins += [_margin_doc(c, m) for c, m in zip(model.covariates, model.covariate_margins)]
    return {
        "format": FORMAT,
        "version": VERSION,
        "response": model.response,
        "covariates": list(model.covariates),
        "criterion": vine.criterion.value,
        "indep_level": _float(model.indep_level),
        "margins": margins,
        "vine": {
            "order": list(vine.order),
            "trees": [
                [{"family": c.family.value, "rotation": int(c.rotation),
                  "params": [_float(p) for p in c.params]} for c in tree]
                for tree in vine.pairs
            ],
            "cll_path": [_float(c) for c in vine.cll_path],
            "ll_path": [_float(c) for c in vine.ll_path],
        },
    }


def dumps(model):
    return json.dumps(to_document(model), indent=2, allow_nan=False) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model))


# parsing


def _get(doc, key, kind, loc):
    if not isinstance(doc, dict):
        raise ModelFormatError(loc, f"expected an object, got {type(doc).__name__}")
    if key not in doc:
        raise ModelFormatError(f"{loc}.{key}" if loc else key, "missing field")
    val = doc[key]
    where = f"{loc}.{key}" if loc else key
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ModelFormatError(where, f"expected a number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ModelFormatError(where, f"expected an integer, got {val!r}")
        return val
    if not isinstance(val, kind):
        raise ModelFormatError(where, f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _numbers(values, loc):
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ModelFormatError(f"{loc}[{i}]", f"expected a number, got {v!r}")
        out.append(float(v))
    return out


def _parse_margin(doc, loc):
    column = _get(doc, "column", str, loc)
    bandwidth = _get(doc, "bandwidth", float, loc)
    n = _get(doc, "n", int, loc)
    digest = _get(doc, "sha256", str, loc)
    sample = np.array(_numbers(_get(doc, "sample", list, loc), f"{loc}.sample"))
    if sample.size != n:
        raise ModelFormatError(f"{loc}.sample", f"holds {sample.size} values but n is {n}")
    if sample_digest(sample) != digest:
        raise ModelFormatError(f"{loc}.sha256", "digest does not match the sample values")
    try:
        return column, KernelMargin(sample, bandwidth)
    except ValueError as exc:
        raise ModelFormatError(loc, str(exc)) from None


def _parse_pair(doc, loc):
    name = _get(doc, "family", str, loc)
    try:
        family = Family(name)
    except ValueError:
        raise ModelFormatError(f"{loc}.family", f"unknown copula family {name!r}") from None
    rotation = _get(doc, "rotation", int, loc)
    params = _numbers(_get(doc, "params", list, loc), f"{loc}.params")
    try:
        return BiCop(family, rotation, tuple(params))
    except ValueError as exc:
        raise ModelFormatError(loc, str(exc)) from None


def from_document(doc):
    """Rebuild a :class:`QuantRegModel` from its dict form."""
    fmt = _get(doc, "format", str, "")
    if fmt != FORMAT:
        raise ModelFormatError("format", f"expected {FORMAT!r}, got {fmt!r}")
    version = _get(doc, "version", int, "")
    if version != VERSION:
        raise ModelFormatError("version", f"unsupported version {version}")
    response = _get(doc, "response", str, "")
    covariates = _get(doc, "covariates", list, "")
    for i, c in enumerate(covariates):
        if not isinstance(c, str):
            raise ModelFormatError(f"covariates[{i}]", f"expected a column name, got {c!r}")
    crit = _get(doc, "criterion", str, "")
    try:
        criterion = Criterion(crit)
    except ValueError:
        raise ModelFormatError("criterion", f"unknown criterion {crit!r}") from None
    indep_level = _get(doc, "indep_level", float, "")
    margin_docs = _get(doc, "margins", list, "")
    if len(margin_docs) != len(covariates) + 1:
        raise ModelFormatError("margins", f"expected {len(covariates) + 1} margins, got {len(margin_docs)}")
    parsed = [_parse_margin(m, f"margins[{i}]") for i, m in enumerate(margin_docs)]
    expected = [response] + list(covariates)
    for i, ((column, _), want) in enumerate(zip(parsed, expected)):
        if column != want:
            raise ModelFormatError(f"margins[{i}].column", f"expected {want!r}, got {column!r}")
    vdoc = _get(doc, "vine", dict, "")
    order = _get(vdoc, "order", list, "vine")
    for i, j in enumerate(order):
        if isinstance(j, bool) or not isinstance(j, int) or not 0 <= j < len(covariates):
            raise ModelFormatError(f"vine.order[{i}]", f"invalid covariate index {j!r}")
    trees_doc = _get(vdoc, "trees", list, "vine")
    trees = []
    for t, tree in enumerate(trees_doc):
        if not isinstance(tree, list):
            raise ModelFormatError(f"vine.trees[{t}]", "expected a list of pair-copulas")
        trees.append([_parse_pair(c, f"vine.trees[{t}][{e}]") for e, c in enumerate(tree)])
    cll_path = _numbers(_get(vdoc, "cll_path", list, "vine"), "vine.cll_path")
    ll_path = _numbers(_get(vdoc, "ll_path", list, "vine"), "vine.ll_path")
    try:
        vine = DVineRegression(tuple(order), tuple(tuple(t) for t in trees), criterion, cll_path, ll_path)
    except ValueError as exc:
        raise ModelFormatError("vine", str(exc)) from None
    return QuantRegModel(response, tuple(covariates), parsed[0][1],
                         tuple(m for _, m in parsed[1:]), vine, indep_level)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_document(doc)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
