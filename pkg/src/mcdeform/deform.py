"""Truncated Maurer-Cartan series, gauge action and the Kuranishi recursion.

A series ``sum_I t^I x_I`` is stored as one element over ``Omega (x) P`` with
``P`` the truncated holomorphic polynomial algebra, so brackets of series are
the multi-index convolutions and truncation comes for free from ``P``.
"""
from __future__ import annotations

import math

import numpy as np

from .base import parameter_algebra, tensor_product
from .cohesive import CohesiveModel
from .graded import AlgebraElement, GradingError, supercommutator
from .hodge import HodgePackage

OBSTRUCTION_TOL = 1e-9
RESIDUAL_TOL = 1e-9
DEFAULT_ORDER = 6


class NotHarmonicError(ValueError):
    def __init__(self, distance: float):
        super().__init__(f"seed is not harmonic: distance {distance:.3e}")
        self.distance = distance


class Series:
    """``sum_{0 < |I| <= N} t^I x_I`` with coefficients in ``Omega (x) End(E)``."""

    degree: int | None = None

    def __init__(self, model: CohesiveModel, params, element: AlgebraElement | None = None):
        if params.antiholomorphic:
            raise GradingError("series live over a holomorphic parameter algebra")
        self.model = model
        self.params = params
        self.tbase = tensor_product(model.base, params)
        if element is None:
            element = AlgebraElement.zero(self.tbase, model.space, model.space, self.degree)
        if element.base is not self.tbase:
            raise GradingError("series element lives over the wrong base")
        if np.abs(self.tbase.split(element.coeffs)[:, params.unit]).max(initial=0.0) > 0:
            raise GradingError("series must have zero constant term")
        self.element = element

    @classmethod
    def from_coefficients(cls, model, params, coeffs: dict):
        """``coeffs`` maps exponent tuples to elements (or raw arrays) over the model's base."""
        tb = tensor_product(model.base, params)
        c = np.zeros((model.base.dim, params.dim, model.space.dim, model.space.dim), dtype=complex)
        for a, x in coeffs.items():
            c[:, params.monomial_index(tuple(a))] += x.coeffs if isinstance(x, AlgebraElement) else np.asarray(x)
        return cls(model, params, AlgebraElement(tb, model.space, model.space, tb.join(c), cls.degree))

    @classmethod
    def linear(cls, model, params, directions):
        """``sum_i t_i x_i`` from one element per parameter direction."""
        if len(directions) != params.m:
            raise ValueError(f"need {params.m} directions, got {len(directions)}")
        coeffs = {}
        for i, x in enumerate(directions):
            a = tuple(int(j == i) for j in range(params.m))
            coeffs[a] = x
        return cls.from_coefficients(model, params, coeffs)

    def _new(self, element, cls=None):
        return (cls or type(self))(self.model, self.params, element)

    @property
    def order(self) -> int:
        return self.params.order

    def array(self) -> np.ndarray:
        """Coefficients as ``(monomial, form, row, column)``."""
        return np.moveaxis(self.tbase.split(self.element.coeffs), 1, 0)

    def coefficient(self, a) -> AlgebraElement:
        c = self.array()[self.params.monomial_index(tuple(a))]
        return AlgebraElement(self.model.base, self.model.space, self.model.space, c, self.degree, check=False)

    def items(self):
        for a in self.params.holomorphic_indices():
            if sum(a):
                yield a, self.coefficient(a)

    def weight_part(self, w: int) -> "Series":
        keep = (self.params.weights == w)[None, :, None, None]
        c = np.where(keep, self.tbase.split(self.element.coeffs), 0)
        return self._new(self._element(self.tbase.join(c)))

    def _element(self, c, degree="same"):
        deg = self.degree if degree == "same" else degree
        return AlgebraElement(self.tbase, self.model.space, self.model.space, c, deg, check=False)

    def norms(self) -> dict:
        arr = self.array()
        return {a: float(np.linalg.norm(arr[i])) for i, a in enumerate(self.params.holomorphic_indices()) if sum(a)}

    def max_norm(self) -> float:
        return max(self.norms().values(), default=0.0)

    def worst(self):
        """Multi-index and norm of the largest coefficient."""
        n = self.norms()
        if not n:
            return None, 0.0
        a = max(n, key=n.get)
        return a, n[a]

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_norm() <= tol

    def __add__(self, other):
        return self._new(self.element + other.element)

    def __sub__(self, other):
        return self._new(self.element - other.element)

    def __neg__(self):
        return self._new(-self.element)

    def __mul__(self, s):
        return self._new(self.element * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"{type(self).__name__}(m={self.params.m}, N={self.order}, max={self.max_norm():.3e})"


class MCSeries(Series):
    degree = 1


class GaugeSeries(Series):
    degree = 0


class TwoSeries(Series):
    degree = 2


def _series_class(degree):
    return {0: GaugeSeries, 1: MCSeries, 2: TwoSeries}.get(degree, Series)


def same_model(a: CohesiveModel, b: CohesiveModel) -> bool:
    """Models agree as data (base, space and connection), not just as objects."""
    return a is b or (a.base is b.base and a.space == b.space
                      and np.allclose(a.connection.coeffs, b.connection.coeffs, rtol=0, atol=1e-12))


def hol_params(m: int, order: int = DEFAULT_ORDER):
    return parameter_algebra(m, order, False)


def series_d(x: Series) -> Series:
    """Coefficientwise ``d_E``."""
    arr = x.array()
    out = x.model.dgla.d_arrays(arr)
    deg = None if x.degree is None else x.degree + 1
    return _series_class(deg)(x.model, x.params,
                              x._element(x.tbase.join(np.moveaxis(out, 0, 1)), deg))


def series_bracket(x: Series, y: Series) -> Series:
    el = supercommutator(x.element, y.element)
    deg = x.degree + y.degree if x.degree is not None and y.degree is not None else None
    el = AlgebraElement(x.tbase, el.source, el.target, el.coeffs, deg, check=False)
    return _series_class(deg)(x.model, x.params, el)


def _apply(hp: HodgePackage, op, x: Series, degree) -> Series:
    el = hp.apply(op, x.element)
    return _series_class(degree)(x.model, x.params, x._element(el.coeffs, degree))


def mc_residual(alpha: Series) -> Series:
    """``d alpha + 1/2 [alpha, alpha]`` coefficientwise."""
    return series_d(alpha) + 0.5 * series_bracket(alpha, alpha)


def gauge_act(u: Series, alpha: Series) -> MCSeries:
    """``e^{ad u} alpha - sum_n ad_u^n(d u) / (n+1)!``, the series form of conjugating ``d + alpha`` by ``e^u``."""
    if u.params is not alpha.params or not same_model(u.model, alpha.model):
        raise GradingError("gauge and MC series live over different parameters or models")
    out = alpha
    term_a = alpha
    term_d = series_d(u)
    out = out - term_d
    for n in range(1, u.order + 1):
        term_a = series_bracket(u, term_a)
        term_d = series_bracket(u, term_d)
        if term_a.is_zero() and term_d.is_zero():
            break
        out = out + term_a * (1.0 / math.factorial(n)) - term_d * (1.0 / math.factorial(n + 1))
    return MCSeries(alpha.model, alpha.params, AlgebraElement(alpha.tbase, out.element.source, out.element.target,
                                                              out.element.coeffs, 1, check=False))


def kuranishi_map(alpha: Series, hp: HodgePackage) -> MCSeries:
    """``ku(alpha) = alpha + 1/2 d* G [alpha, alpha]``."""
    br = series_bracket(alpha, alpha)
    return alpha + 0.5 * _apply(hp, hp.dstar @ hp.G, br, 1)


class ObstructionTable:
    """Harmonic parts ``H[alpha, alpha]_I`` of the bracket, per multi-index."""

    def __init__(self, series: Series, tol: float = OBSTRUCTION_TOL):
        self.series = series
        self.tol = tol
        self.norms = series.norms()

    def entry(self, a) -> AlgebraElement:
        return self.series.coefficient(a)

    def first_obstructed_order(self):
        bad = [sum(a) for a, n in self.norms.items() if n > self.tol]
        return min(bad) if bad else None

    def max_norm(self) -> float:
        return max(self.norms.values(), default=0.0)

    def verdict(self) -> str:
        w = self.first_obstructed_order()
        if w is None:
            return f"unobstructed through order {self.series.order}"
        return f"obstructed at |I|={w}"

    @property
    def obstructed(self) -> bool:
        return self.first_obstructed_order() is not None


def check_harmonic(beta: Series, hp: HodgePackage, tol: float = 1e-9) -> None:
    off = _apply(hp, np.eye(hp.H.shape[0]) - hp.H, beta, 1)
    dist = off.max_norm()
    if dist > tol:
        raise NotHarmonicError(dist)


def solve_kuranishi(beta: Series, hp: HodgePackage, tol: float = OBSTRUCTION_TOL):
    """Order-by-order solution of ``alpha = beta - 1/2 d* G [alpha, alpha]``.

    Returns ``(alpha, obstructions)``.  The recursion always runs to the
    truncation order; ``obstructions`` records ``H[alpha, alpha]`` so callers
    can tell whether ``alpha`` is a genuine Maurer-Cartan series.
    """
    check_harmonic(beta, hp)
    beta = MCSeries(beta.model, beta.params, beta.element)
    alpha = beta.weight_part(1)
    dsg = hp.dstar @ hp.G
    for w in range(2, beta.order + 1):
        br = series_bracket(alpha, alpha).weight_part(w)
        alpha = alpha + beta.weight_part(w) - 0.5 * _apply(hp, dsg, br, 1)
    obstructions = ObstructionTable(_apply(hp, hp.H, series_bracket(alpha, alpha), 2), tol)
    return alpha, obstructions


def residual_pieces(alpha: Series, hp: HodgePackage):
    """``(d ku(alpha), d* d G [alpha, alpha], H [alpha, alpha])``.

    For any series ``mc_residual(alpha) = 1/2 H[a,a] + d ku(a) + 1/2 d* d G[a,a]``,
    so the residual vanishes iff all three do (the three pieces are orthogonal).
    """
    br = series_bracket(alpha, alpha)
    return (series_d(kuranishi_map(alpha, hp)),
            _apply(hp, hp.dstar @ hp.d @ hp.G, br, 2),
            _apply(hp, hp.H, br, 2))


def slice_normalize(alpha: Series, hp: HodgePackage):
    """Gauge ``alpha`` into ``ker d*``; returns ``(u, alpha')`` with ``alpha' = gauge_act(u, alpha)``.

    At weight ``w`` the new gauge coefficient shifts ``alpha'_w`` by
    ``-d u_w``; ``u_w = G d* R_w`` removes the ``d*``-nonclosed part of the
    current coefficient ``R_w``.
    """
    u = GaugeSeries(alpha.model, alpha.params)
    gd = hp.G @ hp.dstar
    for w in range(1, alpha.order + 1):
        current = gauge_act(u, alpha).weight_part(w)
        step = _apply(hp, gd, current, 0)
        if step.is_zero():
            continue
        u = u + step
    return u, gauge_act(u, alpha)


def kodaira_spencer(alpha: Series, hp: HodgePackage, v, tol: float = RESIDUAL_TOL) -> AlgebraElement:
    """Harmonic representative of the class of ``sum_i v_i alpha_{e_i}``."""
    m = alpha.params.m
    v = np.asarray(v, dtype=complex).reshape(m)
    first = np.zeros(hp.dgla.shape, dtype=complex)
    for i in range(m):
        a = tuple(int(j == i) for j in range(m))
        coeff = alpha.coefficient(a)
        r = hp.dgla.d(coeff).norm()
        if r > tol:
            raise ValueError(f"first-order coefficient in direction {i} is not closed: {r:.3e}")
        first = first + v[i] * coeff.coeffs
    return AlgebraElement(hp.model.base, hp.model.space, hp.model.space, hp.harmonic_project(first), 1,
                          check=False)
