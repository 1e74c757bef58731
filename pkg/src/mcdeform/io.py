"""JSON instance files.

Layout (all keys optional except ``base``, ``space``)::

    base        {"builder": "exterior", "g": 2} | {"builder": "point"}
                | {"labels": [...], "degrees": [...], "unit": 0,
                   "products": [[r, s, u, [re, im]], ...],
                   "differential": [[u, r, [re, im]], ...]}
    space       [[degree, dim], ...]
    connection  [{"form": label, "end_degree": k, "matrix": rows of [re, im]}, ...]
    metric      {"blocks": {"<degree>": matrix}, "base": matrix}
    parameters  {"m": 1, "N": 6}
    seeds       {name: [terms for t_1, terms for t_2, ...]}
    series      {name: {"coefficients": [{"index": [..], "terms": terms}, ...]}}
    homotopy    {"target": {"space": ..., "connection": ...}, "phi": terms, "psi": terms, "h": terms}
    family      {"m": 1, "N": 3, "connection": terms with labels "form|monomial"}

``phi`` maps the file's model to the target, ``psi`` goes back and ``h``
lives on the file's model.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .base import BaseAlgebra, build_exterior, build_point, tensor_product
from .cohesive import CohesiveModel, FlatnessViolation, HomotopyData, Morphism, make_model
from .deform import MCSeries, hol_params
from .graded import AlgebraElement, GradedMap, GradedSpace, GradingError
from .hodge import MetricData
from .transfer import FAMILY_TOL, FamilyConnection, family_params


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path, f"missing key {key!r}")
    return obj[key]


def parse_complex(value, path) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise SchemaError(path, "expected a number or a [re, im] pair")


def parse_matrix(rows, shape, path) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != shape[0]:
        raise SchemaError(path, f"expected {shape[0]} rows")
    out = np.zeros(shape, dtype=complex)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != shape[1]:
            raise SchemaError(f"{path}[{i}]", f"expected {shape[1]} entries")
        for j, v in enumerate(row):
            out[i, j] = parse_complex(v, f"{path}[{i}][{j}]")
    return out


def dump_complex(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def dump_matrix(mat) -> list:
    return [[dump_complex(v) for v in row] for row in np.asarray(mat)]


def parse_base(raw, path="base") -> BaseAlgebra:
    if not isinstance(raw, dict):
        raise SchemaError(path, "expected an object")
    builder = raw.get("builder")
    if builder == "point":
        return build_point()
    if builder == "exterior":
        g = _require(raw, "g", path)
        if not isinstance(g, int) or not 1 <= g <= 8:
            raise SchemaError(f"{path}.g", "expected an integer between 1 and 8")
        return build_exterior(g)
    if builder is not None:
        raise SchemaError(f"{path}.builder", f"unknown builder {builder!r}")
    labels = _require(raw, "labels", path)
    degrees = _require(raw, "degrees", path)
    n = len(labels)
    products = []
    for k, item in enumerate(raw.get("products", [])):
        if not isinstance(item, list) or len(item) != 4:
            raise SchemaError(f"{path}.products[{k}]", "expected [r, s, u, value]")
        r, s, u, v = item
        products.append((r, s, u, parse_complex(v, f"{path}.products[{k}][3]")))
    d = np.zeros((n, n), dtype=complex)
    for k, item in enumerate(raw.get("differential", [])):
        if not isinstance(item, list) or len(item) != 3:
            raise SchemaError(f"{path}.differential[{k}]", "expected [u, r, value]")
        u, r, v = item
        d[u, r] += parse_complex(v, f"{path}.differential[{k}][2]")
    try:
        return BaseAlgebra(labels, degrees, products, d, unit=raw.get("unit", 0), name=raw.get("name"))
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def dump_base(base: BaseAlgebra) -> dict:
    if base is build_point():
        return {"builder": "point"}
    for g in range(1, 9):
        if base.name == f"Lambda({g})" and base is build_exterior(g):
            return {"builder": "exterior", "g": g}
    r, s, u, c = base.coo
    d = base.differential
    return {"labels": list(base.labels), "degrees": [int(x) for x in base.degrees], "unit": base.unit,
            "products": [[int(a), int(b), int(w), dump_complex(z)] for a, b, w, z in zip(r, s, u, c)],
            "differential": [[int(i), int(j), dump_complex(d[i, j])] for i, j in zip(*np.nonzero(d))]}


def parse_space(raw, path="space") -> GradedSpace:
    if not isinstance(raw, list) or not all(isinstance(x, list) and len(x) == 2 for x in raw):
        raise SchemaError(path, "expected a list of [degree, dim] pairs")
    try:
        return GradedSpace([tuple(x) for x in raw])
    except GradingError as exc:
        raise SchemaError(path, str(exc)) from None


def dump_space(space: GradedSpace) -> list:
    return [[d, n] for d, n in space.components]


def parse_terms(items, base, source: GradedSpace, target: GradedSpace, degree, path) -> AlgebraElement:
    """Term list ``[{form, end_degree, matrix}]`` as an element of the given total degree."""
    if not isinstance(items, list):
        raise SchemaError(path, "expected a list of terms")
    c = np.zeros((base.dim, target.dim, source.dim), dtype=complex)
    for k, term in enumerate(items):
        p = f"{path}[{k}]"
        label = _require(term, "form", p)
        try:
            r = base.index(label)
        except ValueError:
            raise SchemaError(f"{p}.form", f"unknown form label {label!r}") from None
        k_end = _require(term, "end_degree", p)
        mat = parse_matrix(_require(term, "matrix", p), (target.dim, source.dim), f"{p}.matrix")
        try:
            GradedMap.from_matrix(source, target, k_end, mat)
        except GradingError as exc:
            raise SchemaError(f"{p}.matrix", str(exc)) from None
        if degree is not None and int(base.degrees[r]) + k_end != degree:
            raise SchemaError(p, f"term has total degree {int(base.degrees[r]) + k_end}, expected {degree}")
        c[r] += mat
    return AlgebraElement(base, source, target, c, degree, check=False)


def dump_terms(x: AlgebraElement) -> list:
    out = []
    for r, k, gm in x.terms():
        out.append({"form": x.base.labels[r], "end_degree": int(k), "matrix": dump_matrix(gm.to_matrix())})
    return out


@dataclass
class Instance:
    path: Path | None
    raw: dict
    model: CohesiveModel
    metric: MetricData
    m: int
    N: int
    seeds: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    homotopy: HomotopyData | None = None
    family: FamilyConnection | None = None

    @property
    def digest(self) -> str:
        return digest(self.raw)

    def seed_series(self, name: str, order: int | None = None) -> MCSeries:
        if name not in self.seeds:
            raise SchemaError("seeds", f"no seed named {name!r}")
        params = hol_params(self.m, self.N if order is None else order)
        return MCSeries.linear(self.model, params, self.seeds[name])

    def named_series(self, name: str, order: int | None = None) -> MCSeries:
        if name not in self.series:
            raise SchemaError("series", f"no series named {name!r}")
        params = hol_params(self.m, self.N if order is None else order)
        return MCSeries.from_coefficients(self.model, params, dict(self.series[name]))


def digest(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _parse_model(raw, base, path_prefix=""):
    space = parse_space(_require(raw, "space", path_prefix.rstrip(".") or "$"), f"{path_prefix}space")
    conn = parse_terms(raw.get("connection", []), base, space, space, 1, f"{path_prefix}connection")
    return make_model(base, space, conn)


def parse_instance(raw: dict, path: Path | None = None) -> Instance:
    """Build and validate every block of an instance; raises ``SchemaError`` or a numerical error."""
    if not isinstance(raw, dict):
        raise SchemaError("$", "expected an object")
    base = parse_base(_require(raw, "base", "$"))
    model = _parse_model(raw, base)
    space = model.space

    metric_raw = raw.get("metric") or {}
    blocks = {}
    for key, mat in (metric_raw.get("blocks") or {}).items():
        try:
            d = int(key)
        except ValueError:
            raise SchemaError(f"metric.blocks.{key}", "degree keys must be integers") from None
        n = space.dim_of(d)
        if n == 0:
            raise SchemaError(f"metric.blocks.{key}", "no component in this degree")
        blocks[d] = parse_matrix(mat, (n, n), f"metric.blocks.{key}")
    gmat = metric_raw.get("base")
    gmat = None if gmat is None else parse_matrix(gmat, (base.dim, base.dim), "metric.base")
    metric = MetricData(space, blocks, gmat)

    params = raw.get("parameters") or {}
    m = params.get("m", 1)
    N = params.get("N", 6)
    if not isinstance(m, int) or m < 1 or not isinstance(N, int) or N < 1:
        raise SchemaError("parameters", "m and N must be positive integers")

    seeds = {}
    for name, dirs in (raw.get("seeds") or {}).items():
        if not isinstance(dirs, list) or len(dirs) != m:
            raise SchemaError(f"seeds.{name}", f"expected {m} parameter directions")
        seeds[name] = [parse_terms(t, base, space, space, 1, f"seeds.{name}[{i}]") for i, t in enumerate(dirs)]

    series = {}
    for name, body in (raw.get("series") or {}).items():
        coeffs = []
        for k, item in enumerate(_require(body, "coefficients", f"series.{name}")):
            p = f"series.{name}.coefficients[{k}]"
            idx = _require(item, "index", p)
            if not isinstance(idx, list) or len(idx) != m or any(not isinstance(i, int) or i < 0 for i in idx) \
                    or not 0 < sum(idx) <= N:
                raise SchemaError(f"{p}.index", f"expected {m} non-negative integers of total 1..{N}")
            coeffs.append((tuple(idx), parse_terms(_require(item, "terms", p), base, space, space, 1, f"{p}.terms")))
        series[name] = coeffs

    homotopy = None
    if raw.get("homotopy"):
        hraw = raw["homotopy"]
        target = _parse_model(_require(hraw, "target", "homotopy"), base, "homotopy.target.")
        E, F = target, model
        phi = Morphism(F, E, parse_terms(_require(hraw, "phi", "homotopy"), base, F.space, E.space, 0, "homotopy.phi"), 0)
        psi = Morphism(E, F, parse_terms(_require(hraw, "psi", "homotopy"), base, E.space, F.space, 0, "homotopy.psi"), 0)
        h = Morphism(F, F, parse_terms(_require(hraw, "h", "homotopy"), base, F.space, F.space, -1, "homotopy.h"), -1)
        homotopy = HomotopyData(phi, psi, h)

    family = None
    if raw.get("family"):
        fraw = raw["family"]
        fm, fN = fraw.get("m", 1), fraw.get("N", 3)
        anti = family_params(fm, fN)
        tb = tensor_product(base, anti)
        B = parse_terms(_require(fraw, "connection", "family"), tb, space, space, 1, "family.connection")
        family = FamilyConnection(base, anti, space, B, tol=np.inf)
        if family.residual > FAMILY_TOL:
            raise FlatnessViolation(family.residual)

    return Instance(path, raw, model, metric, m, N, seeds, series, homotopy, family)


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return parse_instance(raw, path)


def series_terms(series) -> list:
    return [{"index": list(a), "terms": dump_terms(x)} for a, x in series.items() if not x.is_zero()]
