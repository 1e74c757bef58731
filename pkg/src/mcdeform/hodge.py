"""Finite-dimensional Hodge theory for the endomorphism dgla.

All operators are dense matrices on the flattened space ``Omega (x) End(E)``.
The metric is made standard by a transform ``T`` built from Cholesky factors,
so the adjoint of ``d`` is ``T^-1 (T d T^-1)^H T`` and the Laplacian is
diagonalised degree by degree with a Hermitian eigensolver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohesive import CohesiveModel
from .graded import AlgebraElement, GradedSpace

HARMONIC_RTOL = 1e-8


class MetricError(ValueError):
    pass


def _cholesky_upper(mat, what):
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise MetricError(f"{what} must be square")
    if np.abs(mat - mat.conj().T).max(initial=0.0) > 1e-12:
        raise MetricError(f"{what} is not Hermitian")
    lo = np.linalg.eigvalsh(mat).min(initial=np.inf)
    if not lo > 0:
        raise MetricError(f"{what} is not positive definite (smallest eigenvalue {lo:.3e})")
    return np.linalg.cholesky(mat).conj().T


@dataclass
class MetricData:
    """Graded Hermitian metric on ``E`` (one block per degree) and an inner product on the base.

    Missing blocks default to identities, and so does the base metric.
    """

    space: GradedSpace
    blocks: dict = field(default_factory=dict)
    base_metric: np.ndarray | None = None

    def space_matrix(self) -> np.ndarray:
        h = np.zeros((self.space.dim, self.space.dim), dtype=complex)
        for d, n in self.space.components:
            blk = self.space.block(d)
            h[blk, blk] = np.asarray(self.blocks.get(d, np.eye(n)), dtype=complex)
        return h

    def factors(self, base):
        """Upper Cholesky factors ``(R_g, R_h)`` with ``g = R_g^H R_g``, ``h = R_h^H R_h``."""
        rh = np.zeros((self.space.dim, self.space.dim), dtype=complex)
        for d, n in self.space.components:
            blk = self.space.block(d)
            rh[blk, blk] = _cholesky_upper(self.blocks.get(d, np.eye(n)), f"metric block in degree {d}")
        g = np.eye(base.dim) if self.base_metric is None else np.asarray(self.base_metric, dtype=complex)
        if g.shape != (base.dim, base.dim):
            raise MetricError("base metric has the wrong size")
        if np.abs(g[base.degrees[:, None] != base.degrees[None, :]]).max(initial=0.0) > 0:
            raise MetricError("base metric must not pair forms of different degree")
        return _cholesky_upper(g, "base metric"), rh


def default_metric(space: GradedSpace) -> MetricData:
    return MetricData(space)


def _spectral(box_t, degree_of, tau=None):
    """Harmonic projector and Green operator of a degree-preserving Hermitian matrix."""
    n = box_t.shape[0]
    H = np.zeros((n, n), dtype=complex)
    G = np.zeros((n, n), dtype=complex)
    blocks = {}
    top = 0.0
    for k in np.unique(degree_of):
        idx = np.flatnonzero(degree_of == k)
        sub = box_t[np.ix_(idx, idx)]
        w, v = np.linalg.eigh((sub + sub.conj().T) / 2)
        blocks[int(k)] = (idx, w, v)
        top = max(top, float(w.max(initial=0.0)))
    if tau is None:
        tau = HARMONIC_RTOL * (top if top > 0 else 1.0)
    harmonic = {}
    for k, (idx, w, v) in blocks.items():
        small = w <= tau
        vh = v[:, small]
        vg = v[:, ~small]
        H[np.ix_(idx, idx)] = vh @ vh.conj().T
        G[np.ix_(idx, idx)] = (vg / w[~small]) @ vg.conj().T
        harmonic[k] = (idx, vh)
    return H, G, harmonic, tau


class HodgePackage:
    """Adjoint, Laplacian, harmonic projector and Green operator of ``d`` on ``L``.

    Matrices act on flattened coefficient arrays of ``Omega (x) End(E)``.
    """

    def __init__(self, model: CohesiveModel, metric: MetricData | None = None):
        self.model = model
        self.dgla = model.dgla
        self.metric = metric or default_metric(model.space)
        if self.metric.space != model.space:
            raise MetricError("metric is for a different graded space")
        rg, rh = self.metric.factors(model.base)
        T = np.kron(rg, np.kron(rh, np.linalg.inv(rh).T))
        Tinv = np.linalg.inv(T)
        self.T, self.Tinv = T, Tinv
        d_t = T @ self.dgla.matrix @ Tinv
        box_t = d_t.conj().T @ d_t + d_t @ d_t.conj().T
        H_t, G_t, harmonic, tau = _spectral(box_t, self.dgla.degree_of)
        self.tau = tau
        self.d = np.asarray(self.dgla.matrix)
        self.dstar = Tinv @ d_t.conj().T @ T
        self.box = Tinv @ box_t @ T
        self.H = Tinv @ H_t @ T
        self.G = Tinv @ G_t @ T
        self.harmonic_bases = {k: Tinv[:, idx] @ v for k, (idx, v) in harmonic.items()}
        for m in (self.d, self.dstar, self.box, self.H, self.G):
            m.setflags(write=False)

    @property
    def harmonic_dims(self) -> dict[int, int]:
        return {k: b.shape[1] for k, b in self.harmonic_bases.items()}

    def inner(self, x, y) -> complex:
        """Hermitian pairing, antilinear in ``x``."""
        return complex(np.vdot(self.T @ _flat(x), self.T @ _flat(y)))

    def apply(self, op: np.ndarray, x):
        """Apply an operator to an element over ``Omega`` or over ``Omega (x) P`` (coefficientwise in P)."""
        if isinstance(x, AlgebraElement):
            c = self.apply(op, x.coeffs) if x.base is self.model.base else _apply_series(op, x)
            return AlgebraElement(x.base, x.source, x.target, c, None, check=False)
        x = np.asarray(x)
        shape = self.dgla.shape
        flat = x.reshape(-1, int(np.prod(shape)))
        return (flat @ op.T).reshape(x.shape)

    def harmonic_project(self, x):
        return self.apply(self.H, x)

    def green(self, x):
        return self.apply(self.G, x)

    def codifferential(self, x):
        return self.apply(self.dstar, x)

    def differential(self, x):
        return self.apply(self.d, x)

    def decompose(self, x):
        """``(d d* G x, d* d G x, H x)``, summing to ``x``."""
        gx = self.green(x)
        return (self.differential(self.codifferential(gx)), self.codifferential(self.differential(gx)),
                self.harmonic_project(x))

    def is_harmonic(self, x, tol: float = 1e-9) -> bool:
        return _norm(self.apply(np.eye(self.H.shape[0]) - self.H, x)) <= tol


def _flat(x):
    return (x.coeffs if isinstance(x, AlgebraElement) else np.asarray(x)).ravel()


def _norm(x):
    return float(np.linalg.norm(_flat(x)))


def _apply_series(op, x: AlgebraElement):
    tb = x.base
    c = tb.split(x.coeffs)
    moved = np.moveaxis(c, 1, 0)
    n = moved.shape[0]
    out = (moved.reshape(n, -1) @ op.T).reshape(moved.shape)
    return tb.join(np.moveaxis(out, 0, 1))


def build_hodge(model: CohesiveModel, metric: MetricData | None = None) -> HodgePackage:
    return HodgePackage(model, metric)


def harmonic_project(hp: HodgePackage, x):
    return hp.harmonic_project(x)


def green(hp: HodgePackage, x):
    return hp.green(x)


def codifferential(hp: HodgePackage, x):
    return hp.codifferential(x)


class ScalarHodge:
    """Hodge theory of the base algebra itself, ``(Omega, d_Omega)`` with metric ``g``."""

    def __init__(self, base, base_metric=None):
        g = np.eye(base.dim) if base_metric is None else np.asarray(base_metric, dtype=complex)
        rg = _cholesky_upper(g, "base metric")
        rinv = np.linalg.inv(rg)
        d_t = rg @ base.differential @ rinv
        box_t = d_t.conj().T @ d_t + d_t @ d_t.conj().T
        H_t, G_t, _, self.tau = _spectral(box_t, base.degrees)
        self.H = rinv @ H_t @ rg
        self.G = rinv @ G_t @ rg

    def project(self, vec):
        return np.asarray(vec) @ self.H.T
