"""Ready-made models: the gl2 example, random flat models and random homotopy data."""
from __future__ import annotations

import numpy as np

from .base import build_exterior, build_point
from .cohesive import (CohesiveModel, HomotopyData, Morphism, cone, direct_sum, hom_differential,
                       identity_morphism, make_model)
from .graded import AlgebraElement, GradedSpace, compose, direct_sum_embeddings


def gl2_model(g: int = 2) -> CohesiveModel:
    """``C^2`` in degree 0 over ``Lambda(g)`` with zero connection."""
    return make_model(build_exterior(g), GradedSpace([(0, 2)]))


def gl2_seed(model: CohesiveModel, a, b) -> AlgebraElement:
    """``th1 (x) a + th2 (x) b``."""
    return AlgebraElement.from_terms(model.base, model.space, model.space, [("th1", a), ("th2", b)], 1)


def _complex(rng, size: int, shape, ac_weight=0.5):
    """Random bounded complex as a sum of one- and two-term pieces within ``size`` vectors.

    Returns ``(space, v0, summand labels)`` with the basis sorted by degree.
    """
    degs, pieces = [], []
    lo, hi = shape
    while len(degs) < size:
        d = int(rng.integers(lo, hi + 1))
        if len(degs) + 2 <= size and d < hi and rng.random() < ac_weight:
            pieces.append((len(degs), len(degs) + 1))
            degs += [d, d + 1]
        else:
            pieces.append((len(degs),))
            degs.append(d)
    order = np.argsort(degs, kind="stable")
    where = np.empty_like(order)
    where[order] = np.arange(len(order))
    sdegs = np.array(degs)[order]
    space = GradedSpace([(int(d), int((sdegs == d).sum())) for d in np.unique(sdegs)])
    v0 = np.zeros((space.dim, space.dim), dtype=complex)
    labels = np.zeros(space.dim, dtype=int)
    for k, p in enumerate(pieces):
        if len(p) == 2:
            v0[where[p[1]], where[p[0]]] = 1.0
        for i in p:
            labels[where[i]] = k
    return space, v0, labels


def _random_complex_scalar(rng, size):
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)


def algebra_inverse(g: AlgebraElement) -> AlgebraElement:
    """Inverse of an element whose unit coefficient is an invertible matrix."""
    base = g.base
    g0 = np.zeros_like(g.coeffs)
    g0[base.unit] = g.coeffs[base.unit]
    inv0 = np.zeros_like(g.coeffs)
    inv0[base.unit] = np.linalg.inv(g.coeffs[base.unit])
    inv0 = AlgebraElement(base, g.target, g.source, inv0, 0, check=False)
    n = AlgebraElement(base, g.source, g.target, g.coeffs - g0, 0, check=False)
    x = compose(inv0, n)
    out = AlgebraElement.identity(base, g.source)
    term = out
    for _ in range(int(base.degrees.max(initial=0)) + 1):
        term = -compose(x, term)
        if term.is_zero():
            break
        out = out + term
    return compose(out, inv0)


def conjugate_model(model: CohesiveModel, g: AlgebraElement) -> CohesiveModel:
    """Model with connection ``g A g^-1 - D(g) g^-1``."""
    base = model.base
    ginv = algebra_inverse(g)
    dg = AlgebraElement(base, g.source, g.target, np.einsum("ur,rij->uij", base.differential, g.coeffs), 1,
                        check=False)
    a = compose(g, compose(model.connection, ginv)) - compose(dg, ginv)
    return make_model(base, model.space, AlgebraElement(base, model.space, model.space, a.coeffs, 1))


def random_degree_element(rng, base, source, target, degree, scale=1.0) -> AlgebraElement:
    from .graded import total_degree_grid
    grid = total_degree_grid(base, source, target)
    c = scale * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    return AlgebraElement(base, source, target, np.where(grid == degree, c, 0), degree, check=False)


def random_model(rng, base=None, size=None, shape=(-1, 1), conj_scale=0.3, ac_weight=0.5) -> CohesiveModel:
    """Random flat model: an elementary complex plus ``th_i (x) N_i``, conjugated by ``1 + X``.

    ``N_i`` act by scalars on the elementary summands, so they are commuting
    chain maps and the seed is flat; conjugation keeps flatness.
    """
    if base is None:
        g = int(rng.integers(0, 4))
        base = build_point() if g == 0 else build_exterior(g)
    size = size or int(rng.integers(2, 7))
    space, v0, labels = _complex(rng, size, shape, ac_weight)
    terms = [(base.unit, v0)]
    for r in np.flatnonzero(base.degrees == 1):
        scal = _random_complex_scalar(rng, labels.max() + 1)
        terms.append((int(r), np.diag(scal[labels])))
    seed = make_model(base, space, AlgebraElement.from_terms(base, space, space, terms, 1))
    x = random_degree_element(rng, base, space, space, 0, conj_scale)
    g = AlgebraElement.identity(base, space) + x
    return conjugate_model(seed, g)


def unobstructed_model(rng, size=None, conj_scale=0.3) -> CohesiveModel:
    """Random model over ``Lambda(1)`` with ``H^1(L) != 0``, ``H^2(L) = 0`` and ``L^2 != 0``.

    Over the point, harmonic seeds of such models compose to zero; over
    ``Lambda(1)`` the brackets are nonzero and exact.
    """
    shapes = ((0, 1), (0, 2), (-1, 1), (-1, 2))
    while True:
        shape = shapes[int(rng.integers(len(shapes)))]
        model = random_model(rng, base=build_exterior(1), size=size or int(rng.integers(3, 6)), shape=shape,
                             conj_scale=conj_scale)
        L = model.dgla
        dims = L.cohomology_dims()
        if dims.get(2, 0) == 0 and dims.get(1, 0) > 0 and L.indices(2).size:
            return model


def contraction(model: CohesiveModel) -> AlgebraElement:
    """Degree ``-1`` element ``s`` with ``d s = id`` on a contractible model (least squares)."""
    L = model.dgla
    src = L.indices(-1)
    tgt = L.indices(0)
    rhs = AlgebraElement.identity(model.base, model.space).coeffs.ravel()[tgt]
    sol, *_ = np.linalg.lstsq(L.matrix[np.ix_(tgt, src)], rhs, rcond=None)
    vec = np.zeros(L.dim, dtype=complex)
    vec[src] = sol
    s = AlgebraElement(model.base, model.space, model.space, vec.reshape(L.shape), -1, check=False)
    err = np.linalg.norm(L.d(s).coeffs - AlgebraElement.identity(model.base, model.space).coeffs)
    if err > 1e-9:
        raise ValueError(f"model is not contractible (defect {err:.3e})")
    return s


def _embed(base, small: GradedSpace, big: GradedSpace, idx, into: bool):
    c = np.zeros((base.dim, big.dim, small.dim) if into else (base.dim, small.dim, big.dim), dtype=complex)
    if into:
        c[base.unit, idx, np.arange(small.dim)] = 1
        return AlgebraElement(base, small, big, c, 0, check=False)
    c[base.unit, np.arange(small.dim), idx] = 1
    return AlgebraElement(base, big, small, c, 0, check=False)


def random_homotopy_data(rng, E: CohesiveModel, K: CohesiveModel | None = None, scale=0.3):
    """Homotopy data between ``F = E + cone(id_K)`` and ``E``, randomised by homotopies.

    Returns ``(F, data)`` with ``data.phi: F -> E`` and ``data.psi: E -> F``.
    """
    base = E.base
    if K is None:
        K = random_model(rng, base=base, size=int(rng.integers(1, 4)))
    C = cone(identity_morphism(K))
    F = direct_sum(E, C)
    _, iE, iC = direct_sum_embeddings(E.space, C.space)
    phi0 = _embed(base, E.space, F.space, iE, into=False)
    psi0 = _embed(base, E.space, F.space, iE, into=True)
    s = contraction(C)
    h0 = np.zeros((base.dim, F.space.dim, F.space.dim), dtype=complex)
    h0[:, iC[:, None], iC[None, :]] = -s.coeffs
    h0 = AlgebraElement(base, F.space, F.space, h0, -1, check=False)

    a = Morphism(F, E, random_degree_element(rng, base, F.space, E.space, -1, scale), -1)
    b = Morphism(E, F, random_degree_element(rng, base, E.space, F.space, -1, scale), -1)
    c = Morphism(F, F, random_degree_element(rng, base, F.space, F.space, -2, scale), -2)
    da, db, dc = hom_differential(a), hom_differential(b), hom_differential(c)
    phi = Morphism(F, E, phi0 + da.body, 0)
    psi = Morphism(E, F, psi0 + db.body, 0)
    h = (h0 + compose(psi0, a.body) + compose(b.body, phi0) + compose(b.body, da.body) + dc.body)
    data = HomotopyData(phi, psi, Morphism(F, F, h, -1)).verify()
    return F, data


def acyclic_extension():
    """``E = C(0) + C(1)`` with zero differential, ``F = E + (C -> C)``, and its evident homotopy data.

    Also returns the pieces ``p: E^0 -> ac^1`` and ``q: ac^0 -> E^1`` as
    elements over the point.
    """
    base = build_point()
    E = make_model(base, GradedSpace([(0, 1), (1, 1)]))
    ac_space = GradedSpace([(0, 1), (1, 1)])
    v = np.zeros((1, 2, 2))
    v[0, 1, 0] = 1
    ac = make_model(base, ac_space, AlgebraElement(base, ac_space, ac_space, v, 1))
    F = direct_sum(E, ac)
    _, iE, iA = direct_sum_embeddings(E.space, ac.space)
    phi = Morphism(F, E, _embed(base, E.space, F.space, iE, into=False), 0)
    psi = Morphism(E, F, _embed(base, E.space, F.space, iE, into=True), 0)
    h = np.zeros((1, F.space.dim, F.space.dim), dtype=complex)
    h[0, iA[0], iA[1]] = -1.0
    data = HomotopyData(phi, psi, Morphism(F, F, AlgebraElement(base, F.space, F.space, h, -1), -1)).verify()
    p = np.zeros((1, F.space.dim, F.space.dim), dtype=complex)
    p[0, iA[1], iE[0]] = 1.0
    q = np.zeros((1, F.space.dim, F.space.dim), dtype=complex)
    q[0, iE[1], iA[0]] = 1.0
    return E, F, data, AlgebraElement(base, F.space, F.space, p, 1), AlgebraElement(base, F.space, F.space, q, 1)
