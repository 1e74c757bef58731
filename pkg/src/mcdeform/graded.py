"""Graded linear algebra over a finite base algebra.

Elements of ``Omega (x) Hom(E, F)`` are stored densely as an array of shape
``(dim Omega, dim F, dim E)``: slot ``r`` holds the full matrix multiplying the
basis form ``omega_r``.  Degrees are never read off array shapes; they come
from the explicit degree labels of the base basis and of the graded spaces.

Sign convention for composition (Koszul rule)::

    (mu (x) N) o (omega (x) M) = (-1)^{deg N * deg omega} (mu omega) (x) (N M)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

DROP_TOL = 1e-14


class GradingError(ValueError):
    """Raised on degree or shape bookkeeping mismatches."""


@dataclass(frozen=True)
class GradedSpace:
    """Finite-dimensional Z-graded complex vector space.

    ``components`` lists ``(degree, dimension)`` pairs with strictly
    increasing degrees and positive dimensions.
    """

    components: tuple[tuple[int, int], ...]

    def __init__(self, components: Sequence[tuple[int, int]]):
        comps = tuple((int(d), int(n)) for d, n in components)
        for d, n in comps:
            if n <= 0:
                raise GradingError(f"component in degree {d} has dimension {n}")
        degs = [d for d, _ in comps]
        if any(b <= a for a, b in zip(degs, degs[1:])):
            raise GradingError(f"degrees must be strictly increasing, got {degs}")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return sum(n for _, n in self.components)

    @property
    def degrees(self) -> np.ndarray:
        """Degree of every basis vector, in storage order."""
        return _basis_degrees(self.components)

    @property
    def parity(self) -> np.ndarray:
        return 1.0 - 2.0 * (self.degrees % 2)

    def dim_of(self, degree: int) -> int:
        return dict(self.components).get(degree, 0)

    def block(self, degree: int) -> slice:
        start = 0
        for d, n in self.components:
            if d == degree:
                return slice(start, start + n)
            start += n
        return slice(start, start)

    def shift(self, k: int = 1) -> "GradedSpace":
        """``E[k]`` with ``E[k]^n = E^{n+k}``."""
        return GradedSpace([(d - k, n) for d, n in self.components])

    def __add__(self, other: "GradedSpace") -> "GradedSpace":
        """Direct sum; within each degree ``self`` comes first."""
        dims: dict[int, int] = {}
        for d, n in self.components + other.components:
            dims[d] = dims.get(d, 0) + n
        return GradedSpace(sorted(dims.items()))

    def __repr__(self) -> str:
        return f"GradedSpace({list(self.components)})"


@lru_cache(maxsize=None)
def _basis_degrees(components) -> np.ndarray:
    out = np.concatenate([np.full(n, d, dtype=int) for d, n in components]) if components else np.zeros(0, int)
    out.setflags(write=False)
    return out


def direct_sum_embeddings(first: GradedSpace, second: GradedSpace):
    """Index arrays placing the bases of ``first`` and ``second`` inside ``first + second``."""
    total = first + second
    idx1, idx2 = [], []
    for d, _ in total.components:
        blk = total.block(d)
        n1 = first.dim_of(d)
        idx1.extend(range(blk.start, blk.start + n1))
        idx2.extend(range(blk.start + n1, blk.stop))
    return total, np.array(idx1, dtype=int), np.array(idx2, dtype=int)


@dataclass(frozen=True)
class GradedMap:
    """Degree-``k`` linear map between graded spaces, held as blocks.

    ``blocks[i]`` maps the degree-``i`` component of the source into the
    degree ``i + k`` component of the target.  Missing blocks are zero.
    """

    source: GradedSpace
    target: GradedSpace
    degree: int
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        for i, blk in self.blocks.items():
            shape = (self.target.dim_of(i + self.degree), self.source.dim_of(i))
            if np.shape(blk) != shape:
                raise GradingError(f"block {i}: expected shape {shape}, got {np.shape(blk)}")

    def to_matrix(self) -> np.ndarray:
        out = np.zeros((self.target.dim, self.source.dim), dtype=complex)
        for i, blk in self.blocks.items():
            out[self.target.block(i + self.degree), self.source.block(i)] = blk
        return out

    @classmethod
    def from_matrix(cls, source: GradedSpace, target: GradedSpace, degree: int, matrix) -> "GradedMap":
        matrix = np.asarray(matrix, dtype=complex)
        mask = degree_mask(source, target, degree)
        if np.abs(matrix[~mask]).max(initial=0.0) > DROP_TOL:
            raise GradingError(f"matrix has entries outside degree {degree}")
        blocks = {}
        for d, _ in source.components:
            if target.dim_of(d + degree):
                blk = matrix[target.block(d + degree), source.block(d)]
                if np.linalg.norm(blk) > DROP_TOL:
                    blocks[d] = blk.copy()
        return cls(source, target, degree, blocks)

    def __matmul__(self, other: "GradedMap") -> "GradedMap":
        if other.target != self.source:
            raise GradingError("composable maps need matching source/target")
        return GradedMap.from_matrix(other.source, self.target, self.degree + other.degree,
                                     self.to_matrix() @ other.to_matrix())


def degree_mask(source: GradedSpace, target: GradedSpace, degree: int) -> np.ndarray:
    """Boolean matrix marking entries of a degree-``degree`` map."""
    return (target.degrees[:, None] - source.degrees[None, :]) == degree


def _same_base(a, b) -> None:
    if a is not b:
        raise GradingError("elements live over different base algebras")


class AlgebraElement:
    """Element of ``Omega (x) Hom(source, target)``.

    ``coeffs[r]`` is the full ``target.dim x source.dim`` matrix paired with
    basis form ``r`` of ``base``.  ``degree`` is the declared total degree,
    or ``None`` for an inhomogeneous element.
    """

    __slots__ = ("base", "source", "target", "coeffs", "degree")

    def __init__(self, base, source: GradedSpace, target: GradedSpace, coeffs, degree: int | None = None,
                 check: bool = True):
        coeffs = np.array(coeffs, dtype=complex)
        shape = (base.dim, target.dim, source.dim)
        if coeffs.shape != shape:
            raise GradingError(f"coefficient array has shape {coeffs.shape}, expected {shape}")
        norms = np.sqrt(np.einsum("rij,rij->r", coeffs.real, coeffs.real)
                        + np.einsum("rij,rij->r", coeffs.imag, coeffs.imag))
        coeffs[norms < DROP_TOL] = 0.0
        if check and degree is not None:
            off = ~(total_degree_grid(base, source, target) == degree)
            if np.abs(coeffs[off]).max(initial=0.0) > 1e-12:
                raise GradingError(f"element is not homogeneous of degree {degree}")
            coeffs[off] = 0.0
        coeffs.setflags(write=False)
        self.base = base
        self.source = source
        self.target = target
        self.coeffs = coeffs
        self.degree = degree

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, base, source, target, degree=None):
        return cls(base, source, target, np.zeros((base.dim, target.dim, source.dim)), degree, check=False)

    @classmethod
    def identity(cls, base, space):
        c = np.zeros((base.dim, space.dim, space.dim), dtype=complex)
        c[base.unit] = np.eye(space.dim)
        return cls(base, space, space, c, 0, check=False)

    @classmethod
    def from_terms(cls, base, source, target, terms, degree=None):
        """Build from ``(form index or label, matrix)`` pairs."""
        c = np.zeros((base.dim, target.dim, source.dim), dtype=complex)
        for key, mat in terms:
            r = base.index(key) if isinstance(key, str) else int(key)
            if isinstance(mat, GradedMap):
                mat = mat.to_matrix()
            c[r] += np.asarray(mat, dtype=complex)
        return cls(base, source, target, c, degree)

    def _like(self, coeffs, degree):
        return AlgebraElement(self.base, self.source, self.target, coeffs, degree, check=False)

    # inspection ----------------------------------------------------------
    def terms(self) -> Iterator[tuple[int, int, GradedMap]]:
        """Nonzero homogeneous pieces as ``(form index, End-degree, GradedMap)``."""
        for r in np.flatnonzero(np.abs(self.coeffs).reshape(self.base.dim, -1).max(axis=1) > 0):
            mat = self.coeffs[r]
            for k in _end_degrees(self.source, self.target):
                mask = degree_mask(self.source, self.target, k)
                if np.abs(mat[mask]).max(initial=0.0) > 0:
                    yield int(r), k, GradedMap.from_matrix(self.source, self.target, k, np.where(mask, mat, 0))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm() <= tol

    def homogeneous_parts(self) -> dict[int, "AlgebraElement"]:
        if self.degree is not None:
            return {} if self.is_zero() else {self.degree: self}
        grid = total_degree_grid(self.base, self.source, self.target)
        parts = {}
        for k in np.unique(grid):
            c = np.where(grid == k, self.coeffs, 0)
            if np.abs(c).max(initial=0.0) > 0:
                parts[int(k)] = self._like(c, int(k))
        return parts

    def form_part(self, form_degree: int) -> "AlgebraElement":
        """Keep only the terms whose form has the given degree."""
        keep = (self.base.degrees == form_degree)[:, None, None]
        return self._like(np.where(keep, self.coeffs, 0), self.degree)

    # arithmetic ----------------------------------------------------------
    def _check_compatible(self, other):
        _same_base(self.base, other.base)
        if self.source != other.source or self.target != other.target:
            raise GradingError("elements map between different spaces")

    def __add__(self, other):
        self._check_compatible(other)
        deg = self.degree if self.degree == other.degree else None
        if other.is_zero():
            deg = self.degree
        elif self.is_zero():
            deg = other.degree
        return self._like(self.coeffs + other.coeffs, deg)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self._like(-self.coeffs, self.degree)

    def __mul__(self, scalar):
        return self._like(complex(scalar) * self.coeffs, self.degree)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        return (f"AlgebraElement(degree={self.degree}, {self.source} -> {self.target}, "
                f"terms={sum(1 for _ in self.terms())})")


def _end_degrees(source: GradedSpace, target: GradedSpace) -> list[int]:
    return sorted({t - s for t, _ in target.components for s, _ in source.components})


_GRID_CACHE: dict = {}


def total_degree_grid(base, source: GradedSpace, target: GradedSpace) -> np.ndarray:
    """Total degree of every storage slot ``(r, a, b)``: ``deg omega_r + deg f_a - deg e_b``."""
    key = (id(base), source, target)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        grid = (base.degrees[:, None, None] + target.degrees[None, :, None] - source.degrees[None, None, :])
        grid.setflags(write=False)
        _GRID_CACHE[key] = grid
    return grid


def compose_arrays(base, left, right, left_target: GradedSpace, middle: GradedSpace) -> np.ndarray:
    """Koszul composition on raw coefficient arrays; leading batch axes allowed."""
    r, s, u, c = base.coo
    odd = base.odd[s]
    lr = left[..., r, :, :]
    if odd.any():
        twisted = left_target.parity[:, None] * left * middle.parity[None, :]
        lr = np.where(odd[:, None, None], twisted[..., r, :, :], lr)
    terms = (lr @ right[..., s, :, :]) * c[:, None, None]
    moved = np.moveaxis(terms, -3, 0)
    out = base.scatter @ moved.reshape(len(c), -1)
    return np.moveaxis(np.asarray(out).reshape((base.dim,) + moved.shape[1:]), 0, -3)


def compose(g: AlgebraElement, f: AlgebraElement) -> AlgebraElement:
    """``g o f`` for ``f: E -> F`` and ``g: F -> G`` over the same base."""
    _same_base(g.base, f.base)
    if g.source != f.target:
        raise GradingError(f"cannot compose: {g.source} != {f.target}")
    coeffs = compose_arrays(g.base, g.coeffs, f.coeffs, g.target, g.source)
    deg = g.degree + f.degree if g.degree is not None and f.degree is not None else None
    return AlgebraElement(g.base, f.source, g.target, coeffs, deg, check=False)


def supercommutator(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    """Graded commutator ``xy - (-1)^{|x||y|} yx`` extended bilinearly."""
    _same_base(x.base, y.base)
    if not (x.source == x.target == y.source == y.target):
        raise GradingError("supercommutator needs endomorphism-valued elements of one space")
    out = AlgebraElement.zero(x.base, x.source, x.source)
    for dx, xp in x.homogeneous_parts().items():
        for dy, yp in y.homogeneous_parts().items():
            sign = -1 if (dx * dy) % 2 else 1
            term = compose(xp, yp) - sign * compose(yp, xp)
            out = out + term
    return out


def supertrace(x: AlgebraElement) -> np.ndarray:
    """Form-valued supertrace: ``sum_r omega_r * str(M_r)`` as a vector over the base basis.

    Only End-degree-0 blocks meet the diagonal, so the alternating trace of
    the full matrix equals the supertrace of its degree-0 part.
    """
    if x.source != x.target:
        raise GradingError("supertrace needs an endomorphism-valued element")
    return np.einsum("rii,i->r", x.coeffs, x.source.parity)
