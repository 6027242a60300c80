"""The natural torsionless connection of a cyclic vector field.

Given a product with unit e and a vector field X whose powers
e, X, X o X, ... form a frame, there is exactly one torsionless connection
with nabla e = 0 and d_nabla(X o) = 0.  It is built here as

    Gamma = Gamma_aux + S0 + S1

where Gamma_aux is any torsionless auxiliary connection, S0 corrects the
unit to be flat, and S1 solves the remaining condition inside the space of
symmetric tensors that vanish on e.  Everything is computed over jets, so
derivatives of Gamma come out exactly to the truncation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import FModel, multiplication_operator, product_at, vector_field_at, exprs_at
from .jet import Jet, SingularJetMatrixError, jet_einsum, jet_solve, stack
from .report import CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION, Report, max_abs


class NonCyclicError(ValueError):
    """The multiplication operator of X does not admit e as a cyclic vector."""


class CounitError(ValueError):
    pass


@dataclass(frozen=True)
class ChristoffelJet:
    """Christoffel symbols as jets, ``gamma[k, i, j] = Gamma^k_{ij}``."""

    point: tuple
    gamma: Jet

    def __post_init__(self):
        g = self.gamma
        object.__setattr__(self, "gamma", (g + g.transpose(0, 2, 1)) * 0.5)
        object.__setattr__(self, "point", tuple(float(p) for p in self.point))

    @property
    def order(self):
        return self.gamma.order

    @property
    def dim(self):
        return self.gamma.shape[0]

    def values(self):
        return self.gamma.values()

    def truncate(self, order):
        return ChristoffelJet(self.point, self.gamma.truncate(order))

    @classmethod
    def zero(cls, point, order):
        n = len(point)
        return cls(tuple(point), Jet.constant(np.zeros((n, n, n)), n, order))


@dataclass(frozen=True)
class CounitChoice:
    """A covector theta with theta(e) = 1 at the base point."""

    theta: tuple

    def jet(self, model: FModel, point, order) -> Jet:
        if all(isinstance(t, (int, float, np.floating, np.integer)) for t in self.theta):
            return Jet.constant(np.array(self.theta, dtype=float), model.dim, order)
        return exprs_at(model, list(self.theta), point, order)

    def validate(self, e0, theta0=None, tol=1e-12):
        theta0 = np.asarray(self.theta if theta0 is None else theta0, dtype=float)
        pairing = float(theta0 @ np.asarray(e0, dtype=float))
        if abs(pairing - 1.0) > tol:
            raise CounitError(f"theta(e) = {pairing!r} at the base point, expected 1")


def default_counit(e0) -> CounitChoice:
    e0 = np.asarray(e0, dtype=float)
    return CounitChoice(tuple(e0 / (e0 @ e0)))


# the operator M_A --------------------------------------------------------------

def apply_MA(A, S):
    """(M_A S)(Y, Z) = S(Y, A Z) - S(Z, A Y) for S[k, i, j] and A[l, j]."""
    SA = jet_einsum("kil,lj->kij", S, A)
    return SA - SA.transpose(0, 2, 1)


@dataclass(frozen=True)
class MAOperator:
    """M_A restricted to symmetric tensors vanishing on e.

    The operator acts on the two lower slots and leaves the upper index
    alone, so it is block diagonal with ``n`` copies of ``block``, an m x m
    jet matrix with m = n(n-1)/2.  Columns of ``block`` correspond to the
    symmetric forms ``basis[p]`` and rows to antisymmetric pairs ``pairs``.
    """

    block: Jet | None
    basis: Jet | None
    pairs: tuple
    dropped: int
    dim: int

    @property
    def size(self):
        return len(self.pairs)

    def full_matrix(self) -> np.ndarray:
        """Constant part of the whole operator, n^2(n-1)/2 square."""
        if self.block is None:
            return np.zeros((0, 0))
        return np.kron(np.eye(self.dim), self.block.values())

    def condition_number(self) -> float:
        if self.block is None:
            return 1.0
        return float(np.linalg.cond(self.block.values()))

    def solve(self, rhs: Jet) -> Jet:
        """Symmetric S with S(e, .) = 0 and M_A S = rhs (rhs[k, i, j] antisymmetric)."""
        if self.block is None:
            return rhs * 0.0
        rows = stack([rhs[:, i, j] for i, j in self.pairs], axis=0)  # (m, n)
        try:
            coef = jet_solve(self.block.truncate(rhs.order), rows)
        except SingularJetMatrixError as exc:
            raise NonCyclicError(str(exc)) from exc
        return jet_einsum("pk,pij->kij", coef, self.basis.truncate(rhs.order))


def assemble_MA(A: Jet, e: Jet) -> MAOperator:
    n = e.shape[0]
    if n == 1:
        return MAOperator(None, None, (), 0, 1)
    e0 = e.values()
    p = int(np.argmax(np.abs(e0)))
    comp = [a for a in range(n) if a != p]
    # phi^a = dx^a - (e^a / e^p) dx^p annihilates e to every jet order
    ratio = e / e[p]
    eye = Jet.constant(np.eye(n), n, e.order)
    phis = []
    for a in comp:
        row = eye[a] - stack([ratio[a] if j == p else ratio[a] * 0.0 for j in range(n)])
        phis.append(row)
    basis = []
    for x in range(len(comp)):
        for y in range(x, len(comp)):
            outer = jet_einsum("i,j->ij", phis[x], phis[y])
            basis.append(outer + outer.T)
    basis = stack(basis)
    pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    images = jet_einsum("pil,lj->pij", basis, A)  # b(Y, A Z)
    images = images - images.transpose(0, 2, 1)
    block = stack([images[:, i, j] for i, j in pairs], axis=0)
    if abs(np.linalg.det(block.values())) <= 1e-14 * max(1.0, max_abs(block.values())) ** len(pairs):
        raise NonCyclicError("M_A is singular at the base point; X is not cyclic there")
    return MAOperator(block, basis, pairs, p, n)


# construction -------------------------------------------------------------------

def _aux_jet(aux, n, order):
    if aux is None:
        return Jet.constant(np.zeros((n, n, n)), n, order)
    if isinstance(aux, ChristoffelJet):
        aux = aux.gamma
    if isinstance(aux, Jet):
        return aux.truncate(order)
    aux = np.asarray(aux, dtype=float)
    if aux.shape != (n, n, n):
        raise ValueError("auxiliary Christoffel symbols must have shape (n, n, n)")
    return Jet.constant(0.5 * (aux + aux.transpose(0, 2, 1)), n, order)


def natural_connection_from_jets(c: Jet, e: Jet, X: Jet, point, theta=None, aux=None) -> ChristoffelJet:
    """Natural connection from jets of c, e and X of order ``k + 1``; result has order k."""
    n = e.shape[0]
    order = c.order - 1
    if order < 0:
        raise ValueError("need jets of order >= 1 to build the connection")
    A = multiplication_operator(c, X)
    aux_hi = _aux_jet(aux, n, order + 1)
    lo = lambda j: j.truncate(order)
    e_lo = lo(e)

    if theta is None:
        theta = Jet.constant(np.asarray(default_counit(e.values()).theta), n, order)
    elif not isinstance(theta, Jet):
        theta = Jet.constant(np.asarray(theta, dtype=float), n, order)
    else:
        theta = theta.truncate(order)
    pairing = jet_einsum("i,i->", theta, e_lo)
    theta = theta * pairing.reciprocal()

    # auxiliary covariant derivative of e: D[k, i] = nabla_i e^k
    D = e.derivatives() + lo(jet_einsum("kil,l->ki", aux_hi, e))
    De = jet_einsum("ki,i->k", D, e_lo)
    S0 = (
        -jet_einsum("i,kj->kij", theta, D)
        - jet_einsum("j,ki->kij", theta, D)
        + jet_einsum("ij,k->kij", jet_einsum("i,j->ij", theta, theta), De)
    )

    # d_aux A (d_i, d_j) = (nabla_i A) d_j - (nabla_j A) d_i
    dA = A.derivatives().transpose(0, 2, 1)  # [k, i, j] = d_i A^k_j
    nablaA = dA + lo(jet_einsum("kil,lj->kij", aux_hi, A)) - lo(jet_einsum("kl,lij->kij", A, aux_hi))
    dnabA = nablaA - nablaA.transpose(0, 2, 1)

    A_lo = lo(A)
    op = assemble_MA(A_lo, e_lo)
    rhs = -dnabA - apply_MA(A_lo, S0)
    S1 = op.solve(rhs)
    return ChristoffelJet(tuple(point), lo(aux_hi) + S0 + S1)


def build_natural_connection(model: FModel, X="X", point=None, order: int = 1, theta=None, aux=None) -> ChristoffelJet:
    """Natural connection of (model, X) at ``point`` as jets of the given order.

    ``theta`` may be a CounitChoice, a covector or None (default e/|e|^2);
    ``aux`` is an optional torsionless auxiliary connection (constant array
    or ChristoffelJet); the result does not depend on either.
    """
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, order + 1)
    Xj = vector_field_at(model, X, point, order + 1)
    if isinstance(theta, CounitChoice):
        theta_jet = theta.jet(model, point, order)
        theta.validate(pj.e.values(), theta_jet.values())
    else:
        theta_jet = theta
    return natural_connection_from_jets(pj.c, pj.e, Xj, point, theta_jet, aux)


# covariant derivatives and checks -------------------------------------------------

def covariant_product_derivative(c: Jet, gamma: Jet) -> Jet:
    """T[k, i, j, l] = (nabla_i o)^k_{jl}; one order below ``c``."""
    order = min(c.order - 1, gamma.order)
    dc = c.derivatives().truncate(order)  # [k, j, l, i]
    c = c.truncate(order)
    G = gamma.truncate(order)
    T = dc.transpose(0, 3, 1, 2)
    T = T + jet_einsum("kim,mjl->kijl", G, c)
    T = T - jet_einsum("mij,kml->kijl", G, c)
    T = T - jet_einsum("mil,kjm->kijl", G, c)
    return T


def covariant_vector_derivative(V: Jet, gamma: Jet) -> Jet:
    """D[k, i] = (nabla_i V)^k."""
    order = min(V.order - 1, gamma.order)
    return V.derivatives().truncate(order) + jet_einsum("kil,l->ki", gamma.truncate(order), V.truncate(order))


def covariant_endo_derivative(A: Jet, gamma: Jet) -> Jet:
    """N[k, i, j] = (nabla_i A)^k_j."""
    order = min(A.order - 1, gamma.order)
    G = gamma.truncate(order)
    A_lo = A.truncate(order)
    dA = A.derivatives().truncate(order).transpose(0, 2, 1)
    return dA + jet_einsum("kil,lj->kij", G, A_lo) - jet_einsum("kl,lij->kij", A_lo, G)


def exterior_derivative_endo(A: Jet, gamma: Jet) -> Jet:
    """(d_nabla A)(d_i, d_j)^k for torsionless nabla."""
    N = covariant_endo_derivative(A, gamma)
    return N - N.transpose(0, 2, 1)


def covariant_associativity_defect(c0, T0):
    # T(U,VoW,Z) + T(U,V,W)oZ - T(U,V,WoZ) - V o T(U,W,Z) on d_a, d_b, d_c, d_d
    r = np.einsum("kamd,mbc->kabcd", T0, c0)
    r += np.einsum("kmd,mabc->kabcd", c0, T0)
    r -= np.einsum("kabm,mcd->kabcd", T0, c0)
    r -= np.einsum("kbm,macd->kabcd", c0, T0)
    return r


def covariant_hm_defect(c0, T0):
    # T(RoS,P,Q) - T(PoQ,R,S) + T(P,R,S)oQ + T(Q,R,S)oP - T(S,P,Q)oR - T(R,P,Q)oS
    # with P, Q, R, S = d_a, d_b, d_c, d_d
    r = np.einsum("mcd,kmab->kabcd", c0, T0)
    r -= np.einsum("mab,kmcd->kabcd", c0, T0)
    r += np.einsum("kmb,macd->kabcd", c0, T0)
    r += np.einsum("kma,mbcd->kabcd", c0, T0)
    r -= np.einsum("kmc,mdab->kabcd", c0, T0)
    r -= np.einsum("kmd,mcab->kabcd", c0, T0)
    return r


def connection_residuals(c: Jet, e: Jet, X: Jet, gamma: Jet) -> dict:
    """All defining and derived identities of the natural connection at the base point."""
    T = covariant_product_derivative(c, gamma).values()
    c0 = c.values()
    e0 = e.values()
    A = multiplication_operator(c, X)
    De = covariant_vector_derivative(e, gamma).values()
    dA = exterior_derivative_endo(A, gamma).values()
    DX = covariant_vector_derivative(X, gamma).values()
    W0 = DX @ e0
    return {
        "nabla_e": max_abs(De),
        "d_nabla_XA": max_abs(dA),
        "full_symmetry": max_abs(T - T.transpose(0, 2, 1, 3)),
        "nabla_X_vs_e": max_abs(DX - np.einsum("kil,l->ki", c0, W0)),
        "T_e_slot1": max_abs(np.einsum("kijl,i->kjl", T, e0)),
        "T_e_slot2": max_abs(np.einsum("kijl,j->kil", T, e0)),
        "cov_associativity": max_abs(covariant_associativity_defect(c0, T)),
        "cov_hertling_manin": max_abs(covariant_hm_defect(c0, T)),
    }


def check_connection_axioms(gamma: ChristoffelJet, model: FModel, X="X", point=None, tol: float = 1e-9) -> Report:
    point = np.asarray(gamma.point if point is None else point, dtype=float)
    order = max(1, gamma.order + 1)
    pj = product_at(model, point, order)
    Xj = vector_field_at(model, X, point, order)
    G = gamma.gamma
    if G.order + 1 > order:
        G = G.truncate(order - 1)
    res = connection_residuals(pj.c, pj.e, Xj, G)
    scale = max(1.0, max_abs(pj.c.values()), max_abs(G.values()), max_abs(Xj.values()), max_abs(pj.e.values()))
    return Report(
        "connection_axioms",
        tuple(res.items()),
        tol * scale,
        point=tuple(point),
        order=gamma.order,
        convention_notes=(CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION),
        info={"scale": scale},
    )


def ma_operator_at(model: FModel, X="X", point=None) -> MAOperator:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, 0)
    Xj = vector_field_at(model, X, point, 0)
    return assemble_MA(multiplication_operator(pj.c, Xj), pj.e)
