"""Perturbation transfer of Maurer-Cartan series and normalisation of families.

Homotopy data ``(phi: F -> E, psi: E -> F, h)`` with ``psi phi - id_F = d h``
moves a deformation ``eta`` of ``F`` to ``E`` through the geometric series

    eps = phi (id - eta h)^-1 eta psi,    phi_t = phi + phi (id - eta h)^-1 eta h.

Families over a formal disk live over ``Omega (x) P`` with ``P`` the
antiholomorphic parameter algebra; their connection splits by ``dtb``-degree.
"""
from __future__ import annotations

import itertools

import numpy as np

from .base import parameter_algebra, tensor_product
from .cohesive import (CohesiveModel, HomotopyData, hom_d_arrays, lift, make_model,
                       restrict_at_origin)
from .deform import GaugeSeries, MCSeries, Series, hol_params
from .graded import AlgebraElement, GradedSpace, GradingError, compose

FAMILY_TOL = 1e-9
MAX_LINFTY_ARITY = 4


class NotRegularError(ValueError):
    pass


# transfer ---------------------------------------------------------------------

def _lift_to(x: AlgebraElement, tb) -> AlgebraElement:
    return x if x.base is tb else lift(x, tb)


def _geometric(eta: AlgebraElement, h: AlgebraElement, order: int) -> AlgebraElement:
    """``sum_{n >= 0} (eta h)^n eta``; terminates because ``eta`` has no constant term."""
    total = eta
    term = eta
    for _ in range(order):
        term = compose(eta, compose(h, term))
        if term.is_zero():
            break
        total = total + term
    return total


def transfer_mc(eta: Series, data: HomotopyData):
    """Push an MC series on ``F`` along the homotopy data to an MC series on ``E``.

    Returns ``(eps, phi_t)`` where ``phi_t`` is the deformed ``F -> E`` map,
    an element over ``Omega (x) P`` whose constant term is ``phi``.
    """
    E = data.phi.target
    if eta.model.space != data.phi.source.space:
        raise GradingError("series does not live on the source of phi")
    tb = eta.tbase
    phi = _lift_to(data.phi.body, tb)
    psi = _lift_to(data.psi.body, tb)
    h = _lift_to(data.h.body, tb)
    S = _geometric(eta.element, h, eta.order)
    eps_el = compose(phi, compose(S, psi))
    eps_el = AlgebraElement(tb, E.space, E.space, eps_el.coeffs, 1, check=False)
    phi_t = phi + compose(phi, compose(S, h))
    phi_t = AlgebraElement(tb, phi_t.source, phi_t.target, phi_t.coeffs, 0, check=False)
    return MCSeries(E, eta.params, eps_el), phi_t


def intertwining_defect(phi_t: AlgebraElement, source_conn: AlgebraElement, target_conn: AlgebraElement) -> float:
    """Norm of ``D phi_t + B_tgt phi_t - phi_t B_src`` for a degree-zero map over any base."""
    c = hom_d_arrays(phi_t.base, phi_t.coeffs, source_conn.coeffs, target_conn.coeffs,
                     phi_t.source, phi_t.target)
    return float(np.linalg.norm(c))


def deformed_connection(series: Series) -> AlgebraElement:
    """``A (x) 1 + series`` over ``Omega (x) P``."""
    return lift(series.model.connection, series.tbase) + series.element


def koszul_sign(perm, degrees) -> int:
    """Graded-antisymmetric sign: each transposition of neighbours ``x, y`` costs ``-(-1)^{|x||y|}``."""
    sign = 1
    for i, j in itertools.combinations(range(len(perm)), 2):
        if perm[i] > perm[j]:
            sign *= -1 if (degrees[perm[i]] * degrees[perm[j]]) % 2 == 0 else 1
    return sign


def linfty_terms(data: HomotopyData, *xs: AlgebraElement) -> AlgebraElement:
    """``Phi_n(x_1..x_n) = sum_sigma chi(sigma) phi x_s1 h x_s2 h ... h x_sn psi``."""
    n = len(xs)
    if n == 0 or n > MAX_LINFTY_ARITY:
        raise ValueError(f"Phi_n is evaluated for 1 <= n <= {MAX_LINFTY_ARITY}, got n = {n}")
    tb = xs[0].base
    phi, psi, h = (_lift_to(m.body, tb) for m in (data.phi, data.psi, data.h))
    degrees = []
    for x in xs:
        if x.degree is None:
            raise GradingError("L-infinity arguments must be homogeneous")
        degrees.append(x.degree)
    out = None
    for perm in itertools.permutations(range(n)):
        chain = xs[perm[-1]]
        for k in reversed(perm[:-1]):
            chain = compose(xs[k], compose(h, chain))
        term = compose(phi, compose(chain, psi)) * koszul_sign(perm, degrees)
        out = term if out is None else out + term
    return out


def mc_eval(data: HomotopyData, eta: Series) -> MCSeries:
    """``sum_n Phi_n(eta, ..., eta) / n!``.

    For an odd argument every permutation contributes the same term, so the
    ``n``-th summand collapses to ``phi eta (h eta)^{n-1} psi``.
    """
    tb = eta.tbase
    phi, psi, h = (_lift_to(m.body, tb) for m in (data.phi, data.psi, data.h))
    E = data.phi.target
    total = None
    term = eta.element
    for _ in range(eta.order):
        piece = compose(phi, compose(term, psi))
        total = piece if total is None else total + piece
        term = compose(term, compose(h, eta.element))
        if term.is_zero():
            break
    total = AlgebraElement(tb, E.space, E.space, total.coeffs, 1, check=False)
    return MCSeries(E, eta.params, total)


# families ---------------------------------------------------------------------

def family_params(m: int, order: int):
    return parameter_algebra(m, order, True)


def dtb_degree(tb) -> np.ndarray:
    """``dtb``-degree of every basis element of ``Omega (x) P``."""
    return np.tile(tb.right.degrees, tb.left.dim)


def dtb_part(x: AlgebraElement, j: int) -> AlgebraElement:
    keep = (dtb_degree(x.base) == j)[:, None, None]
    return AlgebraElement(x.base, x.source, x.target, np.where(keep, x.coeffs, 0), x.degree, check=False)


def weight_part(x: AlgebraElement, w: int) -> AlgebraElement:
    keep = (np.tile(x.base.right.weights, x.base.left.dim) == w)[:, None, None]
    return AlgebraElement(x.base, x.source, x.target, np.where(keep, x.coeffs, 0), x.degree, check=False)


def total_kappa(x: AlgebraElement) -> AlgebraElement:
    """``omega (x) p (x) M -> (-1)^{deg omega} omega (x) kappa(p) (x) M``."""
    tb = x.base
    op = tb.right_operator(tb.right.homotopy, twist=True)
    c = np.einsum("uv,vij->uij", op, x.coeffs)
    deg = None if x.degree is None else x.degree - 1
    return AlgebraElement(tb, x.source, x.target, c, deg, check=False)


def family_d(x: AlgebraElement, src_conn: AlgebraElement, tgt_conn: AlgebraElement) -> AlgebraElement:
    """Hom differential over ``Omega (x) P`` including ``dbar`` on the parameter factor."""
    c = hom_d_arrays(x.base, x.coeffs, src_conn.coeffs, tgt_conn.coeffs, x.source, x.target)
    deg = None if x.degree is None else x.degree + 1
    return AlgebraElement(x.base, x.source, x.target, c, deg, check=False)


class FamilyConnection:
    """Flat connection ``B`` over ``Omega (x) P`` on a fixed graded space.

    ``B`` collects ``chi_0 + chi_1 + ...`` by ``dtb``-degree; the ``dbar`` of
    the parameter disk is part of the base differential.
    """

    def __init__(self, base, params, space: GradedSpace, connection: AlgebraElement, tol: float = FAMILY_TOL):
        if not params.antiholomorphic:
            raise GradingError("families need an antiholomorphic parameter algebra")
        self.base = base
        self.params = params
        self.tbase = tensor_product(base, params)
        self.space = space
        if connection.base is not self.tbase:
            raise GradingError("family connection lives over the wrong base")
        self.connection = AlgebraElement(self.tbase, space, space, connection.coeffs, 1)
        self.residual = self.flatness_residual()
        if self.residual > tol:
            raise ValueError(f"family connection is not flat: residual {self.residual:.3e}")

    def flatness_residual(self) -> float:
        B = self.connection
        return float(np.linalg.norm(np.einsum("ur,rij->uij", self.tbase.differential, B.coeffs)
                                    + compose(B, B).coeffs))

    def chi(self, j: int) -> AlgebraElement:
        return dtb_part(self.connection, j)

    def irregularity(self) -> float:
        """Size of the ``dtb``-components of positive degree."""
        return float(np.linalg.norm(np.where((dtb_degree(self.tbase) > 0)[:, None, None],
                                             self.connection.coeffs, 0)))

    @property
    def regular(self) -> bool:
        return self.irregularity() <= FAMILY_TOL

    def fiber(self) -> CohesiveModel:
        """Restriction to the origin of the disk."""
        return make_model(self.base, self.space, restrict_at_origin(self.connection))


def identity_family(tb, space) -> AlgebraElement:
    return AlgebraElement.identity(tb, space)


def unipotent_inverse(g: AlgebraElement, order: int) -> AlgebraElement:
    """Inverse of ``1 + n`` with ``n`` of positive weight, as a terminating series."""
    one = AlgebraElement.identity(g.base, g.source)
    n = g - one
    out = one
    term = one
    for _ in range(order):
        term = -compose(n, term)
        if term.is_zero():
            break
        out = out + term
    return AlgebraElement(g.base, g.source, g.target, out.coeffs, 0, check=False)


def exp_nilpotent(x: AlgebraElement, order: int) -> AlgebraElement:
    out = AlgebraElement.identity(x.base, x.source)
    term = out
    for n in range(1, order + 1):
        term = compose(x, term) * (1.0 / n)
        if term.is_zero():
            break
        out = out + term
    return AlgebraElement(x.base, x.source, x.target, out.coeffs, 0, check=False)


def log_unipotent(g: AlgebraElement, order: int) -> AlgebraElement:
    one = AlgebraElement.identity(g.base, g.source)
    n = g - one
    out = AlgebraElement.zero(g.base, g.source, g.target)
    term = one
    for k in range(1, order + 1):
        term = compose(n, term)
        if term.is_zero():
            break
        out = out + term * ((-1) ** (k + 1) / k)
    return AlgebraElement(g.base, g.source, g.target, out.coeffs, 0, check=False)


def conjugate(B: AlgebraElement, g: AlgebraElement, order: int) -> AlgebraElement:
    """Connection ``B'`` with ``D + B' = g^-1 (D + B) g``."""
    ginv = unipotent_inverse(g, order)
    dg = AlgebraElement(g.base, g.source, g.target,
                        np.einsum("ur,rij->uij", g.base.differential, g.coeffs), 1, check=False)
    out = compose(ginv, dg + compose(B, g))
    return AlgebraElement(B.base, B.source, B.target, out.coeffs, 1, check=False)


def regularize(fam: FamilyConnection):
    """Conjugate a flat family into one without ``dtb``-components.

    Works up the joint ``(t, tb)`` weight and, within a weight, down the
    ``dtb``-degree: the top component ``b_j`` is removed by conjugating with
    ``1 - kappa(b_j)``.  Returns ``(J, regular family)`` with
    ``J^-1 (D + B) J = D + B'``.
    """
    tb = fam.tbase
    N = fam.params.order
    B = fam.connection
    J = identity_family(tb, fam.space)
    top = int(fam.params.degrees.max(initial=0))
    for w in range(1, N + 1):
        for j in range(top, 0, -1):
            piece = weight_part(dtb_part(B, j), w)
            if piece.is_zero():
                continue
            gamma = -total_kappa(piece)
            g = identity_family(tb, fam.space) + gamma
            B = conjugate(B, g, N)
            J = compose(J, g)
    J = AlgebraElement(tb, fam.space, fam.space, J.coeffs, 0, check=False)
    return J, FamilyConnection(fam.base, fam.params, fam.space, B)


def regularize_morphism(theta: AlgebraElement, source: FamilyConnection, target: FamilyConnection,
                        tol: float = FAMILY_TOL):
    """Replace a closed degree-zero map between regular families by a ``dtb``-free one.

    Descending induction on the top ``dtb``-degree ``j``: closedness forces
    ``dbar theta^j = 0``, so subtracting ``d(kappa theta^j)`` removes it.
    Returns ``(theta_reg, gamma)`` with ``theta_reg = theta + d(gamma)``.
    """
    if not (source.regular and target.regular):
        raise NotRegularError("regularize_morphism needs regular families")
    a, b = source.connection, target.connection
    r = family_d(theta, a, b).norm()
    if r > tol:
        raise ValueError(f"morphism is not closed: {r:.3e}")
    tb = theta.base
    gamma = AlgebraElement.zero(tb, theta.source, theta.target, theta.degree - 1 if theta.degree is not None else None)
    current = theta
    degs = dtb_degree(tb)
    for _ in range(int(tb.right.degrees.max(initial=0)) + 1):
        present = degs[np.abs(current.coeffs).reshape(tb.dim, -1).max(axis=1) > 0]
        j = int(present.max(initial=0))
        if j == 0:
            break
        step = total_kappa(dtb_part(current, j))
        current = current - family_d(step, a, b)
        gamma = gamma - step
    return current, gamma


def to_holomorphic(x: AlgebraElement, hol) -> AlgebraElement:
    """Re-home a ``dtb``-free, ``tb``-free element over ``Omega (x) P_hol``."""
    tb = x.base
    P = tb.right
    c = tb.split(x.coeffs)
    mask = P.holomorphic_mask
    if np.abs(c[:, ~mask]).max(initial=0.0) > FAMILY_TOL:
        raise NotRegularError("element depends on tb or dtb")
    out = np.zeros((tb.left.dim, hol.dim) + c.shape[2:], dtype=complex)
    for a in hol.holomorphic_indices():
        out[:, hol.monomial_index(a)] = c[:, P.monomial_index(a)]
    th = tensor_product(tb.left, hol)
    return AlgebraElement(th, x.source, x.target, th.join(out), x.degree, check=False)


def to_family(x: AlgebraElement, anti) -> AlgebraElement:
    """Inverse of ``to_holomorphic``."""
    th = x.base
    c = th.split(x.coeffs)
    out = np.zeros((th.left.dim, anti.dim) + c.shape[2:], dtype=complex)
    for a in th.right.holomorphic_indices():
        out[:, anti.monomial_index(a)] = c[:, th.right.monomial_index(a)]
    tb = tensor_product(th.left, anti)
    return AlgebraElement(tb, x.source, x.target, tb.join(out), x.degree, check=False)


def family_from_series(alpha: Series, anti=None) -> FamilyConnection:
    """The regular family ``A + alpha(t)``."""
    anti = anti or family_params(alpha.params.m, alpha.order)
    B = to_family(deformed_connection(alpha), anti)
    return FamilyConnection(alpha.model.base, anti, alpha.model.space, B)


def strongify(fam: FamilyConnection, data: HomotopyData | None = None):
    """MC series ``eta = B - B(0)`` of a regular family, pushed to ``E`` along ``data``.

    Without ``data`` the series on the fiber at the origin is returned as is.
    """
    if not fam.regular:
        raise NotRegularError("strongify needs a regular family; regularize it first")
    hol = hol_params(fam.params.m, fam.params.order)
    fiber = fam.fiber() if data is None else data.phi.source
    if data is not None:
        r = float(np.linalg.norm(restrict_at_origin(fam.connection).coeffs - fiber.connection.coeffs))
        if r > FAMILY_TOL:
            raise ValueError(f"homotopy data does not start at the family's fiber: {r:.3e}")
    B = to_holomorphic(fam.connection, hol)
    eta_el = B - lift(restrict_at_origin(fam.connection), B.base)
    eta = MCSeries(fiber, hol, AlgebraElement(B.base, fiber.space, fiber.space, eta_el.coeffs, 1, check=False))
    if data is None:
        return eta
    return transfer_mc(eta, data)[0]


def gauge_from_equivalence(theta: AlgebraElement, model: CohesiveModel) -> GaugeSeries:
    """``u = log theta`` for a holomorphic degree-zero ``theta`` with ``theta(0) = id``."""
    th = theta.base
    if np.linalg.norm(restrict_at_origin(theta).coeffs - AlgebraElement.identity(th.left, theta.source).coeffs) > FAMILY_TOL:
        raise ValueError("equivalence does not restrict to the identity at the origin")
    u = log_unipotent(theta, th.right.order)
    return GaugeSeries(model, th.right, u)


