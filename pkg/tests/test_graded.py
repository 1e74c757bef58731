import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcdeform.base import build_exterior, build_point, tensor_product
from mcdeform.deform import hol_params
from mcdeform.graded import (AlgebraElement, GradedMap, GradedSpace, GradingError, compose, direct_sum_embeddings,
                             supercommutator, supertrace)
from mcdeform.samples import random_degree_element

from oracles import exterior_product, form_degrees, product_table, rho, transposition_sign


def test_graded_space_basics():
    E = GradedSpace([(-1, 2), (1, 3)])
    assert E.components == ((-1, 2), (1, 3))
    assert E.dim == 5
    assert list(E.degrees) == [-1, -1, 1, 1, 1]
    assert E.dim_of(1) == 3 and E.dim_of(0) == 0
    assert E.shift(1).components == ((-2, 2), (0, 3))
    assert (E + GradedSpace([(1, 1)])).dim_of(1) == 4


def test_graded_space_rejects_bad_components():
    with pytest.raises(GradingError):
        GradedSpace([(0, 1), (0, 2)])
    with pytest.raises(GradingError):
        GradedSpace([(1, 1), (0, 2)])
    with pytest.raises(GradingError):
        GradedSpace([(0, 0)])


def test_direct_sum_embeddings_cover_everything():
    a = GradedSpace([(0, 1), (1, 2)])
    b = GradedSpace([(0, 2), (2, 1)])
    total, ia, ib = direct_sum_embeddings(a, b)
    assert sorted(np.concatenate([ia, ib]).tolist()) == list(range(total.dim))
    assert list(total.degrees[ia]) == list(a.degrees)
    assert list(total.degrees[ib]) == list(b.degrees)


def test_graded_map_checks_degree():
    E = GradedSpace([(0, 1), (1, 1)])
    m = np.array([[0, 0], [1, 0]])
    assert GradedMap.from_matrix(E, E, 1, m).degree == 1
    with pytest.raises(GradingError):
        GradedMap.from_matrix(E, E, 0, m)


def test_unit_composition_is_identity(rng):
    base = build_exterior(2)
    E = GradedSpace([(0, 2), (1, 1)])
    f = random_degree_element(rng, base, E, E, 1)
    one = AlgebraElement.identity(base, E)
    assert np.allclose(compose(one, f).coeffs, f.coeffs)
    assert np.allclose(compose(f, one).coeffs, f.coeffs)


def test_theta_squared_vanishes():
    base = build_exterior(1)
    E = GradedSpace([(0, 2)])
    M = np.array([[1, 2], [3, 4]])
    x = AlgebraElement.from_terms(base, E, E, [("th1", M)], 1)
    assert compose(x, x).is_zero()


def test_two_theta_product_sign():
    base = build_exterior(2)
    E = GradedSpace([(0, 1)])
    x = AlgebraElement.from_terms(base, E, E, [("th1", [[2.0]])], 1)
    y = AlgebraElement.from_terms(base, E, E, [("th2", [[3.0]])], 1)
    word, sign = exterior_product((1,), (2,))
    assert sign == 1
    assert compose(x, y).coeffs[base.index("th1^th2"), 0, 0] == 6.0
    word, sign = exterior_product((2,), (1,))
    assert sign == -1
    assert compose(y, x).coeffs[base.index("th1^th2"), 0, 0] == -6.0


def test_koszul_sign_with_odd_map():
    # (th2 (x) b)(th1 (x) a) with |b| = 1 picks up (-1)^{|b| |th1|} = -1 beyond the form swap
    base = build_exterior(2)
    E = GradedSpace([(0, 1), (1, 1)])
    a = np.array([[1, 0], [0, 0]])
    b = np.array([[0, 0], [1, 0]])
    x = AlgebraElement.from_terms(base, E, E, [("th1", a)], 1)
    y = AlgebraElement.from_terms(base, E, E, [("th2", b)], 2)
    got = compose(y, x).coeffs[base.index("th1^th2")]
    assert np.allclose(got, (-1) * transposition_sign((2, 1)) * (b @ a))


def test_transposition_sign_oracle():
    assert transposition_sign((1, 2, 3)) == 1
    assert transposition_sign((2, 1, 3)) == -1
    assert transposition_sign((3, 1, 2)) == 1
    assert transposition_sign((3, 2, 1)) == -1


def _spaces():
    dims = st.integers(0, 2)
    return st.tuples(dims, dims, dims).filter(lambda t: sum(t) >= 1).map(
        lambda t: GradedSpace([(d, n) for d, n in zip((-1, 0, 1), t) if n]))


@given(_spaces(), _spaces(), _spaces(), st.integers(0, 3), st.integers(-2, 2), st.integers(-2, 2),
       st.integers(0, 2**31 - 1))
def test_compose_matches_operator_oracle(A, B, C, g, dx, dy, seed):
    rng = np.random.default_rng(seed)
    base = build_point() if g == 0 else build_exterior(g)
    f = random_degree_element(rng, base, A, B, dx)
    h = random_degree_element(rng, base, B, C, dy)
    table, degs = product_table(base), form_degrees(base)
    assert np.allclose(rho(compose(h, f), table, degs), rho(h, table, degs) @ rho(f, table, degs), atol=1e-12)


@given(_spaces(), st.integers(1, 3), st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2),
       st.integers(0, 2**31 - 1))
def test_koszul_associativity(E, g, d1, d2, d3, seed):
    rng = np.random.default_rng(seed)
    base = build_exterior(g)
    f, gg, h = (random_degree_element(rng, base, E, E, d) for d in (d1, d2, d3))
    lhs = compose(h, compose(gg, f)).coeffs
    rhs = compose(compose(h, gg), f).coeffs
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_compose_over_tensor_base_matches_oracle(rng):
    tb = tensor_product(build_exterior(2), hol_params(2, 3))
    E = GradedSpace([(0, 1), (1, 2)])
    x = random_degree_element(rng, tb, E, E, 1)
    y = random_degree_element(rng, tb, E, E, 0)
    table, degs = product_table(tb, 2, 3), form_degrees(tb)
    assert np.allclose(rho(compose(x, y), table, degs), rho(x, table, degs) @ rho(y, table, degs), atol=1e-12)


def test_identity_is_central(rng):
    base = build_exterior(2)
    E = GradedSpace([(0, 1), (1, 2)])
    y = random_degree_element(rng, base, E, E, 1)
    assert supercommutator(AlgebraElement.identity(base, E), y).is_zero(1e-14)


def test_odd_self_bracket_is_twice_square(rng):
    base = build_exterior(2)
    E = GradedSpace([(0, 2), (1, 1)])
    x = random_degree_element(rng, base, E, E, 1)
    assert np.allclose(supercommutator(x, x).coeffs, 2 * compose(x, x).coeffs)


def test_bracket_of_elementary_maps():
    base = build_point()
    E = GradedSpace([(0, 1), (1, 1)])
    a = AlgebraElement.from_terms(base, E, E, [(0, [[0, 0], [1, 0]])], 1)
    b = AlgebraElement.from_terms(base, E, E, [(0, [[0, 1], [0, 0]])], -1)
    assert np.allclose(supercommutator(a, b).coeffs[0], np.eye(2))


@given(st.integers(0, 2**31 - 1), st.integers(-1, 1), st.integers(-1, 1), st.integers(-1, 1))
def test_graded_jacobi(seed, d1, d2, d3):
    rng = np.random.default_rng(seed)
    base = build_exterior(2)
    E = GradedSpace([(-1, 1), (0, 1), (1, 1)])
    x, y, z = (random_degree_element(rng, base, E, E, d) for d in (d1, d2, d3))
    br = supercommutator

    def s(p):
        return -1 if p % 2 else 1
    total = (s(d1 * d3) * br(x, br(y, z)).coeffs + s(d2 * d1) * br(y, br(z, x)).coeffs
             + s(d3 * d2) * br(z, br(x, y)).coeffs)
    assert np.abs(total).max() <= 1e-10


def test_supertrace_of_identity():
    base = build_point()
    E = GradedSpace([(0, 2), (1, 3)])
    assert np.allclose(supertrace(AlgebraElement.identity(base, E)), [-1])


def test_supertrace_ignores_nonzero_end_degree(rng):
    base = build_exterior(2)
    E = GradedSpace([(0, 2), (1, 2)])
    x = random_degree_element(rng, base, E, E, 1)
    odd = AlgebraElement(base, E, E, np.where(E.degrees[:, None] != E.degrees[None, :], x.coeffs, 0))
    assert np.allclose(supertrace(odd), 0)


@given(st.integers(0, 2**31 - 1), st.integers(-2, 2), st.integers(-2, 2))
def test_supertrace_kills_brackets(seed, dx, dy):
    rng = np.random.default_rng(seed)
    base = build_exterior(3)
    E = GradedSpace([(-1, 1), (0, 2), (1, 1)])
    x = random_degree_element(rng, base, E, E, dx)
    y = random_degree_element(rng, base, E, E, dy)
    assert np.abs(supertrace(supercommutator(x, y))).max() <= 1e-12


def test_element_rejects_inhomogeneous():
    base = build_exterior(1)
    E = GradedSpace([(0, 1)])
    c = np.zeros((2, 1, 1))
    c[0] = 1.0
    c[1] = 1.0
    with pytest.raises(GradingError):
        AlgebraElement(base, E, E, c, 0)


def test_dust_is_dropped():
    base = build_point()
    E = GradedSpace([(0, 1)])
    x = AlgebraElement(base, E, E, np.full((1, 1, 1), 1e-16), 0)
    assert x.is_zero()
