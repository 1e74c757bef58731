"""Finite graded-commutative differential algebras.

These stand in for the antiholomorphic forms on the base manifold (an
exterior algebra, or just C for a point) and for truncated function algebras
on a formal parameter disk.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

AXIOM_TOL = 1e-12


class BaseAlgebraError(ValueError):
    pass


class BaseAlgebra:
    """Graded-commutative algebra with a degree +1 differential.

    Structure constants are kept sparse as ``(r, s, u, c)`` quadruples meaning
    ``omega_r * omega_s`` has coefficient ``c`` on ``omega_u``.  ``differential``
    is a matrix whose column ``r`` holds ``d(omega_r)``.
    """

    def __init__(self, labels, degrees, products, differential=None, unit=0, name=None):
        self.labels = tuple(str(x) for x in labels)
        self.degrees = np.asarray(degrees, dtype=int)
        self.degrees.setflags(write=False)
        n = len(self.labels)
        if self.degrees.shape != (n,) or (self.degrees < 0).any():
            raise BaseAlgebraError("need one non-negative degree per basis label")
        if len(set(self.labels)) != n:
            raise BaseAlgebraError("basis labels must be unique")
        self.unit = int(unit)
        self.name = name or f"algebra[{n}]"
        table: dict[tuple[int, int], dict[int, complex]] = {}
        for r, s, u, c in products:
            if c != 0:
                slot = table.setdefault((int(r), int(s)), {})
                slot[int(u)] = slot.get(int(u), 0) + complex(c)
        self.table = table
        quads = [(r, s, u, c) for (r, s), row in sorted(table.items()) for u, c in sorted(row.items()) if c != 0]
        if quads:
            r, s, u, c = (np.array(col) for col in zip(*quads))
        else:
            r = s = u = np.zeros(0, int)
            c = np.zeros(0, complex)
        self.coo = (r.astype(int), s.astype(int), u.astype(int), c.astype(complex))
        self.odd = self.degrees % 2 == 1
        self.scatter = sp.csr_matrix((np.ones(len(u)), (u, np.arange(len(u)))), shape=(n, len(u)))
        d = np.zeros((n, n), dtype=complex) if differential is None else np.asarray(differential, dtype=complex)
        if d.shape != (n, n):
            raise BaseAlgebraError("differential must be a square matrix over the basis")
        d.setflags(write=False)
        self.differential = d
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def parity(self) -> np.ndarray:
        return 1.0 - 2.0 * (self.degrees % 2)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise BaseAlgebraError(f"unknown basis label {label!r}") from None

    def basis_vector(self, key) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(key) if isinstance(key, str) else key] = 1
        return v

    def multiply(self, x, y) -> np.ndarray:
        """Product of two coefficient vectors."""
        r, s, u, c = self.coo
        out = np.zeros(self.dim, dtype=complex)
        np.add.at(out, u, c * np.asarray(x)[r] * np.asarray(y)[s])
        return out

    def d(self, x) -> np.ndarray:
        return self.differential @ np.asarray(x, dtype=complex)

    def degree_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.degrees == k)

    def __repr__(self):
        return f"BaseAlgebra({self.name}, dim={self.dim})"


@dataclass
class ValidationReport:
    """Outcome of the axiom checks on a base algebra."""

    results: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(passed for passed, _ in self.results.values())

    def failures(self) -> dict:
        return {k: detail for k, (passed, detail) in self.results.items() if not passed}


def _structure_matrix(alg: BaseAlgebra) -> sp.csr_matrix:
    """Multiplication as a map ``Omega (x) Omega -> Omega``; column ``r * n + s`` is ``omega_r omega_s``."""
    r, s, u, c = alg.coo
    n = alg.dim
    return sp.csr_matrix((c, (u, r * n + s)), shape=(n, n * n))


def _first_bad(diff, shape, tol):
    diff = sp.coo_matrix(diff)
    hits = np.abs(diff.data) > tol
    if not hits.any():
        return None
    k = int(np.argmax(np.abs(diff.data)))
    row, col = int(diff.row[k]), int(diff.col[k])
    return tuple(int(i) for i in np.unravel_index(col, shape)) + (row,)


def _associativity_defect(alg: BaseAlgebra, tol: float):
    """First ``(r, s, v, u)`` where ``(w_r w_s) w_v`` and ``w_r (w_s w_v)`` differ, or ``None``.

    Both sides are products of ``n^2 x n`` and ``n x n^2`` sparse matrices;
    entries are matched through int64 keys over ``(r, s, v, u)``, which keeps
    the work proportional to the number of nonzero triple products.
    """
    n = alg.dim
    r, s, u, c = alg.coo
    M = sp.csr_matrix((c, (u, r * n + s)), shape=(n, n * n))
    # left[(u, v), w] = T[u, w, v]; (left @ M)[(u, v), (r, s)] = ((w_r w_s) w_v)_u
    left = sp.csr_matrix((c, (u * n + s, r)), shape=(n * n, n)) @ M
    # right[(u, r), w] = T[u, r, w]; (right @ M)[(u, r), (s, v)] = (w_r (w_s w_v))_u
    right = sp.csr_matrix((c, (u * n + r, s)), shape=(n * n, n)) @ M
    left, right = left.tocoo(), right.tocoo()
    lu, lv = np.divmod(left.row.astype(np.int64), n)
    lr, ls = np.divmod(left.col.astype(np.int64), n)
    ru, rr = np.divmod(right.row.astype(np.int64), n)
    rs, rv = np.divmod(right.col.astype(np.int64), n)
    keys = np.concatenate([((lr * n + ls) * n + lv) * n + lu, ((rr * n + rs) * n + rv) * n + ru])
    vals = np.concatenate([left.data, -right.data])
    uniq, inv = np.unique(keys, return_inverse=True)
    diff = np.zeros(len(uniq), dtype=complex)
    np.add.at(diff, inv, vals)
    hits = np.abs(diff) > tol
    if not hits.any():
        return None
    k = int(uniq[np.argmax(np.abs(diff))])
    return tuple(int(i) for i in np.unravel_index(k, (n, n, n, n)))


def validate(alg: BaseAlgebra, tol: float = AXIOM_TOL) -> ValidationReport:
    """Check the graded-commutative dga axioms.

    Each axiom is an identity of sparse operators on tensor powers of the
    algebra; a failure reports the offending basis indices ``(r, s[, v], u)``
    with ``u`` the output coordinate.
    """
    n = alg.dim
    deg = alg.degrees
    eye = sp.identity(n, dtype=complex, format="csr")
    M = _structure_matrix(alg)
    D = sp.csr_matrix(alg.differential)
    rep = ValidationReport()

    r, s, u, c = alg.coo
    off = np.flatnonzero((np.abs(c) > tol) & (deg[u] != deg[r] + deg[s]))
    bad = (int(r[off[0]]), int(s[off[0]]), int(u[off[0]])) if off.size else None
    if bad is None:
        hits = np.argwhere((np.abs(alg.differential) > tol) & (deg[:, None] != deg[None, :] + 1))
        if hits.size:
            bad = ("d", int(hits[0][1]), int(hits[0][0]))
    rep.results["grading"] = (bad is None, bad)

    rows, cols = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    swap = sp.csr_matrix((np.where((deg[rows] * deg[cols]) % 2 == 1, -1.0, 1.0).ravel(),
                          ((cols * n + rows).ravel(), (rows * n + cols).ravel())), shape=(n * n, n * n))
    bad = _first_bad(M - M @ swap, (n, n), tol)
    rep.results["graded_commutativity"] = (bad is None, bad)

    e = alg.unit
    left_unit = M[:, e * n + np.arange(n)]
    right_unit = M[:, np.arange(n) * n + e]
    bad = _first_bad(sp.hstack([left_unit - eye, right_unit - eye]), (2, n), tol)
    rep.results["unit"] = (bad is None, bad)

    bad = _associativity_defect(alg, tol)
    rep.results["associativity"] = (bad is None, bad)

    bad = _first_bad(D @ D, (n,), tol)
    rep.results["d_squared"] = (bad is None, bad)

    parity = sp.diags(alg.parity.astype(complex))
    bad = _first_bad(D @ M - M @ (sp.kron(D, eye) + sp.kron(parity, D)), (n, n), tol)
    rep.results["leibniz"] = (bad is None, bad)
    return rep


def _merge_sign(a, b):
    """Sign of sorting the concatenation of two sorted disjoint index tuples."""
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


@lru_cache(maxsize=None)
def build_exterior(g: int) -> BaseAlgebra:
    """Exterior algebra on ``g`` degree-one generators ``th1..thg`` with zero differential."""
    if not isinstance(g, (int, np.integer)) or g < 1 or g > 8:
        raise BaseAlgebraError(f"exterior algebra needs 1 <= g <= 8, got {g}")
    subsets = [s for k in range(g + 1) for s in itertools.combinations(range(1, g + 1), k)]
    pos = {s: i for i, s in enumerate(subsets)}
    labels = ["1" if not s else "^".join(f"th{i}" for i in s) for s in subsets]
    products = []
    for a in subsets:
        for b in subsets:
            if set(a) & set(b):
                continue
            products.append((pos[a], pos[b], pos[tuple(sorted(a + b))], _merge_sign(a, b)))
    return BaseAlgebra(labels, [len(s) for s in subsets], products, unit=0, name=f"Lambda({g})")


@lru_cache(maxsize=None)
def build_point() -> BaseAlgebra:
    """The one-dimensional algebra C."""
    return BaseAlgebra(["1"], [0], [(0, 0, 0, 1)], unit=0, name="point")


class ParameterAlgebra(BaseAlgebra):
    """Truncated functions on a formal m-dimensional disk.

    Basis monomials ``t^a tb^b dtb_J``.  Truncation keeps monomials of weight
    ``|a| + |b| + |J| <= order``; counting each ``dtb`` as weight one makes the
    truncation ideal stable under ``dbar``.  Without ``antiholomorphic`` only
    the holomorphic monomials ``t^a`` are present and the differential is 0.
    """

    def __init__(self, m: int, order: int, antiholomorphic: bool = False):
        if m < 1 or order < 0:
            raise BaseAlgebraError("need m >= 1 and order >= 0")
        self.m = m
        self.order = order
        self.antiholomorphic = antiholomorphic
        monos = _monomials(m, order, antiholomorphic)
        self.monomials = tuple(monos)
        self._pos = {mono: i for i, mono in enumerate(monos)}
        products = []
        for i, (a, b, J) in enumerate(monos):
            for j, (a2, b2, J2) in enumerate(monos):
                if set(J) & set(J2):
                    continue
                key = (_vadd(a, a2), _vadd(b, b2), tuple(sorted(J + J2)))
                k = self._pos.get(key)
                if k is not None:
                    products.append((i, j, k, _merge_sign(J, J2)))
        n = len(monos)
        dmat = np.zeros((n, n), dtype=complex)
        kappa = np.zeros((n, n), dtype=complex)
        for i, (a, b, J) in enumerate(monos):
            for var in range(m):
                if b[var] and var not in J:
                    lowered = tuple(x - (k == var) for k, x in enumerate(b))
                    key = (a, lowered, tuple(sorted((var,) + J)))
                    dmat[self._pos[key], i] += b[var] * _merge_sign((var,), J)
            w = sum(b) + len(J)
            if w == 0:
                continue
            for p, var in enumerate(J):
                raised = tuple(x + (k == var) for k, x in enumerate(b))
                key = (a, raised, J[:p] + J[p + 1:])
                kappa[self._pos[key], i] += (-1) ** p / w
        labels = [_mono_label(mono) for mono in monos]
        degrees = [len(J) for _, _, J in monos]
        kind = "anti" if antiholomorphic else "hol"
        super().__init__(labels, degrees, products, dmat, unit=0, name=f"P[{kind},m={m},N={order}]")
        kappa.setflags(write=False)
        self.homotopy = kappa
        hol = np.array([not any(b) and not J for _, b, J in monos], dtype=float)
        self.holomorphic_mask = hol.astype(bool)
        self.weights = np.array([sum(a) + sum(b) + len(J) for a, b, J in monos])
        self.dtb_degrees = self.degrees

    def monomial_index(self, a, b=None, J=()) -> int:
        b = tuple(b) if b is not None else (0,) * self.m
        return self._pos[(tuple(a), b, tuple(sorted(J)))]

    def holomorphic_indices(self) -> list[tuple[int, ...]]:
        """Exponent vectors of the holomorphic monomials, in storage order."""
        return [a for a, b, J in self.monomials if not any(b) and not J]


def _compositions(w, m):
    if m == 1:
        yield (w,)
        return
    for first in range(w, -1, -1):
        for rest in _compositions(w - first, m - 1):
            yield (first,) + rest


def _vadd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _monomials(m, order, anti):
    out = []
    subsets = [J for k in range(m + 1) for J in itertools.combinations(range(m), k)] if anti else [()]
    for w in range(order + 1):
        for J in subsets:
            rest = w - len(J)
            if rest < 0:
                continue
            for tot_a in range(rest, -1, -1):
                if not anti and tot_a != rest:
                    continue
                for a in _compositions(tot_a, m):
                    for b in _compositions(rest - tot_a, m):
                        out.append((a, b, J))
    return out


def _mono_label(mono):
    a, b, J = mono
    parts = []
    for name, exps in (("t", a), ("tb", b)):
        for i, e in enumerate(exps):
            if e == 1:
                parts.append(f"{name}{i + 1}")
            elif e > 1:
                parts.append(f"{name}{i + 1}^{e}")
    parts.extend(f"dtb{j + 1}" for j in J)
    return "*".join(parts) if parts else "1"


@lru_cache(maxsize=None)
def parameter_algebra(m: int, order: int, antiholomorphic: bool = False) -> ParameterAlgebra:
    return ParameterAlgebra(m, order, antiholomorphic)


class TensorBase(BaseAlgebra):
    """Graded tensor product ``left (x) right`` with basis index ``r * dim(right) + q``.

    Multiplication carries the Koszul sign ``(-1)^{deg q * deg s}`` and the
    differential is ``d_left (x) 1 + (-1)^{deg} (x) d_right``.
    """

    def __init__(self, left: BaseAlgebra, right: BaseAlgebra):
        self.left = left
        self.right = right
        nr = right.dim
        labels = [f"{a}|{b}" for a in left.labels for b in right.labels]
        degrees = (left.degrees[:, None] + right.degrees[None, :]).ravel()
        lr, ls, lu, lc = left.coo
        rr, rs, ru, rc = right.coo
        sign = np.where((right.degrees[rr][None, :] * left.degrees[ls][:, None]) % 2 == 1, -1, 1)
        r = (lr[:, None] * nr + rr[None, :]).ravel()
        s = (ls[:, None] * nr + rs[None, :]).ravel()
        u = (lu[:, None] * nr + ru[None, :]).ravel()
        c = (lc[:, None] * rc[None, :] * sign).ravel()
        dmat = np.kron(left.differential, np.eye(nr)) + np.kron(np.diag(left.parity), right.differential)
        super().__init__(labels, degrees, zip(r, s, u, c), dmat, unit=left.unit * nr + right.unit,
                         name=f"{left.name}(x){right.name}")

    def split(self, coeffs):
        """View a coefficient array with leading axis split into ``(left, right)``."""
        coeffs = np.asarray(coeffs)
        return coeffs.reshape((self.left.dim, self.right.dim) + coeffs.shape[1:])

    def join(self, coeffs):
        coeffs = np.asarray(coeffs)
        return coeffs.reshape((self.left.dim * self.right.dim,) + coeffs.shape[2:])

    def right_operator(self, op, twist: bool = False):
        """Lift an operator on the right factor; ``twist`` inserts the left parity sign."""
        left = np.diag(self.left.parity) if twist else np.eye(self.left.dim)
        return np.kron(left, op)


@lru_cache(maxsize=None)
def tensor_product(left: BaseAlgebra, right: BaseAlgebra) -> TensorBase:
    return TensorBase(left, right)


def dbar_homotopy(params: ParameterAlgebra, x) -> np.ndarray:
    """Contracting homotopy ``kappa`` for ``dbar`` on a truncated parameter algebra.

    On ``t^a tb^b dtb_J`` of antiholomorphic weight ``w = |b| + |J| > 0`` it
    contracts one ``dtb`` against the Euler field ``sum tb_i d/dtb_i`` and
    divides by ``w``, so that ``dbar kappa + kappa dbar = id - P0`` with ``P0``
    the projection onto holomorphic monomials.
    """
    if not getattr(params, "antiholomorphic", False):
        raise BaseAlgebraError("dbar homotopy needs an antiholomorphic parameter algebra")
    return params.homotopy @ np.asarray(x, dtype=complex)
