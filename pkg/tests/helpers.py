import numpy as np

from mcdeform.base import build_exterior, build_point, tensor_product
from mcdeform.cohesive import lift
from mcdeform.deform import GaugeSeries, MCSeries, gauge_act, hol_params, series_bracket
from mcdeform.graded import AlgebraElement
from mcdeform.hodge import build_hodge
from mcdeform.samples import (acyclic_extension, random_degree_element, random_homotopy_data, random_model,
                              unobstructed_model)
from mcdeform.transfer import FamilyConnection, conjugate, exp_nilpotent, family_params


def harmonic_seed(rng, model, hp, m, order, scale=0.5):
    """``sum_i t_i beta_i`` with random harmonic ``beta_i``, or ``None`` if there are no harmonic 1-forms."""
    basis = hp.harmonic_bases.get(1)
    if basis is None or basis.shape[1] == 0:
        return None
    dirs = []
    for _ in range(m):
        w = rng.standard_normal(basis.shape[1]) + 1j * rng.standard_normal(basis.shape[1])
        v = basis @ w
        v = scale * v / np.linalg.norm(v)
        dirs.append(AlgebraElement(model.base, model.space, model.space, v.reshape(hp.dgla.shape), 1))
    return MCSeries.linear(model, hol_params(m, order), dirs)


def model_with_harmonic_seeds(rng, m, order, base=None, tries=50):
    for _ in range(tries):
        model = random_model(rng, base=base or build_exterior(int(rng.integers(1, 3))), size=int(rng.integers(2, 5)))
        hp = build_hodge(model)
        beta = harmonic_seed(rng, model, hp, m, order)
        if beta is not None:
            return model, hp, beta
    raise RuntimeError("no model with harmonic 1-forms found")


def unobstructed_case(rng, m, order):
    """Model with ``H L^2 = 0`` and a harmonic seed whose bracket with itself is nonzero."""
    while True:
        model = unobstructed_model(rng)
        hp = build_hodge(model)
        beta = harmonic_seed(rng, model, hp, m, order)
        if beta is not None and series_bracket(beta, beta).max_norm() > 1e-6:
            return model, hp, beta


def random_gauge(rng, model, params, scale=0.3):
    coeffs = {}
    for a in params.holomorphic_indices():
        if 0 < sum(a):
            coeffs[a] = random_degree_element(rng, model.base, model.space, model.space, 0, scale)
    return GaugeSeries.from_coefficients(model, params, coeffs)


def pure_gauge(rng, model, params, scale=0.3):
    """A nontrivial MC series ``gauge_act(u, 0)``."""
    u = random_gauge(rng, model, params, scale)
    return gauge_act(u, MCSeries(model, params))


def random_base(rng):
    g = int(rng.integers(0, 3))
    return build_exterior(g) if g else build_point()


def random_transfer_case(seed, m=1, order=4):
    rng = np.random.default_rng(seed)
    base = random_base(rng)
    E = random_model(rng, base=base, size=int(rng.integers(1, 4)))
    F, data = random_homotopy_data(rng, E, scale=0.2)
    eta = pure_gauge(rng, F, hol_params(m, order), 0.3)
    return E, F, data, eta


def projection_family():
    """Point-base acyclic model with the irregular term ``tb dtb M``."""
    _, F, _, _, _ = acyclic_extension()
    P = family_params(1, 4)
    tb = tensor_product(F.base, P)
    c = lift(F.connection, tb).coeffs.copy()
    c[tb.index("1|tb1*dtb1"), 0, 0] = 1.0
    return FamilyConnection(F.base, P, F.space, AlgebraElement(tb, F.space, F.space, c, 1))


def conjugated_family(rng, m=1, order=4, scale=0.3):
    model = random_model(rng, base=random_base(rng), size=3)
    P = family_params(m, order)
    tb = tensor_product(model.base, P)
    B0 = lift(model.connection, tb)
    x = random_degree_element(rng, tb, model.space, model.space, 0, scale)
    # positive weight so that exp(x) is unipotent
    w = np.tile(P.weights, model.base.dim)
    x = AlgebraElement(tb, model.space, model.space, np.where((w > 0)[:, None, None], x.coeffs, 0), 0)
    g = exp_nilpotent(x, order)
    return model, FamilyConnection(model.base, P, model.space, conjugate(B0, g, order))


def regularization_errors(fam, J, reg):
    """``(irregularity, flatness, conjugation defect, |J(0) - id|)`` of a ``regularize`` output."""
    conj = np.abs(conjugate(fam.connection, J, fam.params.order).coeffs - reg.connection.coeffs).max()
    one = AlgebraElement.identity(fam.tbase, fam.space)
    return reg.irregularity(), reg.residual, conj, np.abs(restrict(J) - restrict(one)).max()


def check_regularization(fam, J, reg):
    irr, flat, conj, start = regularization_errors(fam, J, reg)
    assert irr <= 1e-9 and flat <= 1e-9
    assert conj <= 1e-12
    assert start == 0


def restrict(x):
    tb = x.base
    return tb.split(x.coeffs)[:, tb.right.unit]
