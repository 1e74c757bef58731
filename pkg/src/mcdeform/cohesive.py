"""Flat superconnections over a finite base algebra and their dg-category.

A model is a graded space ``E`` with a total-degree-one element ``A`` of
``Omega (x) End(E)``.  The base differential acts on the form factor only,
``D(omega (x) M) = d omega (x) M``, and flatness reads ``D(A) + A o A = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graded import (AlgebraElement, GradedSpace, GradingError, compose, compose_arrays,
                     direct_sum_embeddings, total_degree_grid)

FLAT_TOL = 1e-9
HOMOTOPY_TOL = 1e-10
RANK_RTOL = 1e-8


class FlatnessViolation(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"connection is not flat: residual {residual:.3e}")
        self.residual = residual


class NotClosedError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"morphism is not closed: |d phi| = {residual:.3e}")
        self.residual = residual


def base_d(base, coeffs) -> np.ndarray:
    """Apply ``d_Omega`` to the form slot (axis -3) of a coefficient array."""
    return np.einsum("ur,...rij->...uij", base.differential, coeffs)


def flatness_residual(base, connection: AlgebraElement) -> AlgebraElement:
    c = base_d(base, connection.coeffs) + compose(connection, connection).coeffs
    return AlgebraElement(base, connection.source, connection.target, c, 2, check=False)


class CohesiveModel:
    """Graded space with a flat degree-one superconnection over ``base``."""

    def __init__(self, base, space: GradedSpace, connection: AlgebraElement):
        self.base = base
        self.space = space
        self.connection = connection

    @cached_property
    def residual(self) -> float:
        return flatness_residual(self.base, self.connection).norm()

    @cached_property
    def dgla(self) -> "DGLA":
        return DGLA(self)

    def v(self, form_degree: int) -> AlgebraElement:
        """Component of the connection with the given form degree."""
        return self.connection.form_part(form_degree)

    def __repr__(self):
        return f"CohesiveModel({self.base.name}, {self.space})"


def make_model(base, space: GradedSpace, connection=None, tol: float = FLAT_TOL) -> CohesiveModel:
    """Validate and wrap a superconnection; ``connection`` may be an element or a term list."""
    if connection is None:
        connection = AlgebraElement.zero(base, space, space, 1)
    elif not isinstance(connection, AlgebraElement):
        connection = AlgebraElement.from_terms(base, space, space, connection, 1)
    if connection.base is not base or connection.source != space or connection.target != space:
        raise GradingError("connection does not live on the given base and space")
    if connection.degree != 1:
        connection = AlgebraElement(base, space, space, connection.coeffs, 1)
    model = CohesiveModel(base, space, connection)
    if model.residual > tol:
        raise FlatnessViolation(model.residual)
    return model


@dataclass(frozen=True)
class Morphism:
    source: CohesiveModel
    target: CohesiveModel
    body: AlgebraElement
    degree: int

    def __post_init__(self):
        b = self.body
        if b.source != self.source.space or b.target != self.target.space:
            raise GradingError("morphism body does not match its endpoints")
        if b.base is not self.source.base or self.source.base is not self.target.base:
            raise GradingError("morphism endpoints live over different bases")
        if b.degree != self.degree:
            object.__setattr__(self, "body", AlgebraElement(b.base, b.source, b.target, b.coeffs, self.degree))

    def __add__(self, other):
        return Morphism(self.source, self.target, self.body + other.body, self.degree)

    def __sub__(self, other):
        return Morphism(self.source, self.target, self.body - other.body, self.degree)

    def __matmul__(self, other):
        return compose_morphisms(self, other)

    def unit_part(self) -> np.ndarray:
        """Matrix paired with the unit form (the form-degree-zero part on exterior bases)."""
        return self.body.coeffs[self.source.base.unit]


def morphism(source: CohesiveModel, target: CohesiveModel, body, degree: int) -> Morphism:
    if not isinstance(body, AlgebraElement):
        body = AlgebraElement.from_terms(source.base, source.space, target.space, body, degree)
    return Morphism(source, target, body, degree)


def identity_morphism(model: CohesiveModel) -> Morphism:
    return Morphism(model, model, AlgebraElement.identity(model.base, model.space), 0)


def compose_morphisms(g: Morphism, f: Morphism) -> Morphism:
    if g.source is not f.target and g.source.space != f.target.space:
        raise GradingError("morphisms are not composable")
    return Morphism(f.source, g.target, compose(g.body, f.body), g.degree + f.degree)


def hom_d_arrays(base, coeffs, a_src, a_tgt, src: GradedSpace, tgt: GradedSpace) -> np.ndarray:
    """``D x + A_tgt x - (-1)^{|x|} x A_src`` slotwise on raw arrays (batch axes allowed)."""
    sign = 1.0 - 2.0 * (total_degree_grid(base, src, tgt) % 2)
    out = base_d(base, coeffs)
    out = out + compose_arrays(base, a_tgt, coeffs, tgt, tgt)
    out = out - compose_arrays(base, sign * coeffs, a_src, tgt, src)
    return out


def hom_differential(phi: Morphism) -> Morphism:
    """``d phi = D phi + A_F phi - (-1)^k phi A_E``."""
    b = phi.body
    c = hom_d_arrays(b.base, b.coeffs, phi.source.connection.coeffs, phi.target.connection.coeffs,
                     b.source, b.target)
    return Morphism(phi.source, phi.target, AlgebraElement(b.base, b.source, b.target, c, None, check=False),
                    phi.degree + 1)


def _parity_twist(x: AlgebraElement, space: GradedSpace) -> np.ndarray:
    """Multiply every End-degree-``k`` block by ``(-1)^k`` and re-home it on ``space``."""
    src, tgt = x.source, x.target
    end_deg = tgt.degrees[:, None] - src.degrees[None, :]
    return x.coeffs * (1.0 - 2.0 * (end_deg % 2))


def shift(model: CohesiveModel, k: int = 1) -> CohesiveModel:
    """``E[k]`` with ``E[k]^n = E^{n+k}``; each shift by one flips the sign of odd End-degree blocks."""
    space = model.space.shift(k)
    c = model.connection.coeffs if k % 2 == 0 else _parity_twist(model.connection, space)
    a = AlgebraElement(model.base, space, space, c, 1)
    return make_model(model.base, space, a)


def cone(phi: Morphism, check: bool = True) -> CohesiveModel:
    """Mapping cone ``C^n = E^{n+1} + F^n`` of a closed degree-zero ``phi: E -> F``.

    The connection is lower triangular: the shifted connection of ``E`` on
    the first summand, ``A_F`` on the second, and ``phi`` as the off-diagonal
    block from the ``E``-summand into ``F``.
    """
    if phi.degree != 0:
        raise GradingError("cone needs a degree-zero morphism")
    if check:
        r = hom_differential(phi).body.norm()
        if r > FLAT_TOL:
            raise NotClosedError(r)
    base = phi.source.base
    e1 = phi.source.space.shift(1)
    f = phi.target.space
    total, i1, i2 = direct_sum_embeddings(e1, f)
    c = np.zeros((base.dim, total.dim, total.dim), dtype=complex)
    c[:, i1[:, None], i1[None, :]] = _parity_twist(phi.source.connection, e1)
    c[:, i2[:, None], i2[None, :]] = phi.target.connection.coeffs
    c[:, i2[:, None], i1[None, :]] = phi.body.coeffs
    return make_model(base, total, AlgebraElement(base, total, total, c, 1))


def direct_sum(first: CohesiveModel, second: CohesiveModel) -> CohesiveModel:
    total, i1, i2 = direct_sum_embeddings(first.space, second.space)
    base = first.base
    c = np.zeros((base.dim, total.dim, total.dim), dtype=complex)
    c[:, i1[:, None], i1[None, :]] = first.connection.coeffs
    c[:, i2[:, None], i2[None, :]] = second.connection.coeffs
    return make_model(base, total, AlgebraElement(base, total, total, c, 1))


# ranks and complexes -----------------------------------------------------

def numerical_rank(mat, rtol: float = RANK_RTOL) -> int:
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int((s > rtol * s[0]).sum())


def complex_cohomology(space: GradedSpace, v0) -> dict[int, int]:
    """Cohomology dimensions of ``(space, v0)`` for a degree-one square matrix ``v0``."""
    v0 = np.asarray(v0)
    out = {}
    for d, n in space.components:
        blk = space.block(d)
        out_rank = numerical_rank(v0[space.block(d + 1), blk])
        in_rank = numerical_rank(v0[blk, space.block(d - 1)])
        out[d] = n - out_rank - in_rank
    return out


def _orth(mat, rtol=RANK_RTOL):
    """Orthonormal basis of the column space."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return np.zeros((mat.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((mat.shape[0], 0), dtype=complex)
    return u[:, s > rtol * s[0]]


def _kernel(mat, rtol=RANK_RTOL):
    mat = np.asarray(mat)
    n = mat.shape[1]
    if mat.shape[0] == 0 or n == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(mat)
    r = int((s > rtol * s[0]).sum()) if s.size and s[0] > 0 else 0
    return vh[r:].conj().T


@dataclass
class EquivalenceCertificate:
    source_cohomology: dict
    target_cohomology: dict
    induced_ranks: dict

    @property
    def is_equivalence(self) -> bool:
        degs = set(self.source_cohomology) | set(self.target_cohomology)
        return all(self.source_cohomology.get(d, 0) == self.target_cohomology.get(d, 0)
                   == self.induced_ranks.get(d, 0) for d in degs)


def is_homotopy_equivalence(phi: Morphism, check: bool = True):
    """Decide whether a closed degree-zero morphism is a homotopy equivalence.

    Only the unit-form part matters: ``phi`` is an equivalence iff its matrix
    ``phi_0`` on the unit form is a quasi-isomorphism ``(E, v0) -> (F, u0)``.
    """
    if phi.degree != 0:
        raise GradingError("homotopy equivalence test needs a degree-zero morphism")
    if check:
        r = hom_differential(phi).body.norm()
        if r > FLAT_TOL:
            raise NotClosedError(r)
    unit = phi.source.base.unit
    E, F = phi.source.space, phi.target.space
    v0 = phi.source.connection.coeffs[unit]
    u0 = phi.target.connection.coeffs[unit]
    p0 = phi.body.coeffs[unit]
    hE = complex_cohomology(E, v0)
    hF = complex_cohomology(F, u0)
    ranks = {}
    for d in sorted(set(hE) | set(hF)):
        be, bf = E.block(d), F.block(d)
        if be.stop == be.start or bf.stop == bf.start:
            ranks[d] = 0
            continue
        cycles = _kernel(v0[E.block(d + 1), be])
        image = u0[bf, F.block(d - 1)]
        bounds = _orth(image)
        mapped = p0[bf, be] @ cycles
        ranks[d] = numerical_rank(np.hstack([bounds, mapped])) - bounds.shape[1]
    cert = EquivalenceCertificate(hE, hF, ranks)
    return cert.is_equivalence, cert


@dataclass(frozen=True)
class HomotopyData:
    """``phi: F -> E``, ``psi: E -> F`` closed of degree 0 and ``h`` on ``F`` with ``psi phi - id = d h``."""

    phi: Morphism
    psi: Morphism
    h: Morphism

    def defect(self) -> dict:
        F = self.phi.source
        out = {
            "phi_closed": hom_differential(self.phi).body.norm(),
            "psi_closed": hom_differential(self.psi).body.norm(),
            "homotopy": ((self.psi @ self.phi) - identity_morphism(F) - hom_differential(self.h)).body.norm(),
        }
        return out

    def verify(self, tol: float = HOMOTOPY_TOL) -> "HomotopyData":
        if self.phi.degree != 0 or self.psi.degree != 0 or self.h.degree != -1:
            raise GradingError("homotopy data needs degrees (0, 0, -1)")
        if self.phi.target.space != self.psi.source.space or self.psi.target.space != self.phi.source.space:
            raise GradingError("phi and psi must go in opposite directions")
        bad = {k: v for k, v in self.defect().items() if v > tol}
        if bad:
            raise ValueError(f"homotopy data fails: {bad}")
        return self


# the dgla of endomorphisms -------------------------------------------------

class DGLA:
    """``L = Omega (x) End(E)`` with ``d x = D x + [A, x]`` and the supercommutator bracket.

    Vectors of ``L`` are flattened coefficient arrays (row-major over
    ``(form, row, column)``); ``degree_of`` gives the total degree of every
    coordinate.
    """

    def __init__(self, model: CohesiveModel):
        self.model = model
        self.base = model.base
        self.space = model.space
        self.grid = total_degree_grid(self.base, self.space, self.space)
        self.degree_of = self.grid.ravel()
        self.shape = self.grid.shape

    @property
    def dim(self) -> int:
        return self.degree_of.size

    def degrees(self) -> list[int]:
        return sorted(int(k) for k in np.unique(self.degree_of))

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.degree_of == k)

    def d_arrays(self, coeffs) -> np.ndarray:
        a = self.model.connection.coeffs
        return hom_d_arrays(self.base, coeffs, a, a, self.space, self.space)

    def d(self, x: AlgebraElement) -> AlgebraElement:
        deg = None if x.degree is None else x.degree + 1
        return AlgebraElement(self.base, self.space, self.space, self.d_arrays(x.coeffs), deg, check=False)

    def bracket(self, x, y):
        from .graded import supercommutator
        return supercommutator(x, y)

    def element(self, vec, degree=None) -> AlgebraElement:
        return AlgebraElement(self.base, self.space, self.space, np.asarray(vec).reshape(self.shape), degree)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Full matrix of ``d`` on the flattened space."""
        n = self.dim
        basis = np.eye(n, dtype=complex).reshape((n,) + self.shape)
        cols = self.d_arrays(basis).reshape(n, n)
        out = cols.T.copy()
        out.setflags(write=False)
        return out

    def block(self, k: int) -> np.ndarray:
        """``d: L^k -> L^{k+1}``."""
        return self.matrix[np.ix_(self.indices(k + 1), self.indices(k))]

    def cohomology_dims(self) -> dict[int, int]:
        out = {}
        for k in self.degrees():
            out[k] = len(self.indices(k)) - numerical_rank(self.block(k)) - numerical_rank(self.block(k - 1))
        return out


def dgla_of(model: CohesiveModel) -> DGLA:
    return model.dgla


# parameter-valued elements ---------------------------------------------------

def lift(x: AlgebraElement, tensor_base) -> AlgebraElement:
    """``x (x) 1`` over ``Omega (x) P``."""
    if tensor_base.left is not x.base:
        raise GradingError("tensor base does not extend the element's base")
    c = np.zeros((tensor_base.left.dim, tensor_base.right.dim) + x.coeffs.shape[1:], dtype=complex)
    c[:, tensor_base.right.unit] = x.coeffs
    return AlgebraElement(tensor_base, x.source, x.target, tensor_base.join(c), x.degree, check=False)


def restrict_at_origin(x: AlgebraElement) -> AlgebraElement:
    """Evaluate a parameter-dependent element at the zero multi-index."""
    tb = x.base
    c = tb.split(x.coeffs)[:, tb.right.unit]
    return AlgebraElement(tb.left, x.source, x.target, c, x.degree, check=False)


def lift_model(model: CohesiveModel, tensor_base) -> CohesiveModel:
    return CohesiveModel(tensor_base, model.space, lift(model.connection, tensor_base))
