"""Metrics on F-manifolds: Levi-Civita connections, invariance and
Dubrovin-Novikov type conditions, the metric <-> connection bridges,
nonlocal-operator affinor conditions and conservation-law checks.

Index conventions: g[i, j] = g_{ij}, Christoffels G[k, i, j] = Gamma^k_{ij},
curvature R[k, s, i, j] = R^k_{sij}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import FModel, ModelError, exprs_at, multiplication_operator, product_at, vector_field_at
from .connection import ChristoffelJet, exterior_derivative_endo, natural_connection_from_jets
from .curvature import check_3rc, riemann_jet, three_rc_zinside
from .expr import Expr, parse_expression
from .jet import Jet, jet_einsum, jet_solve
from .report import CHRISTOFFEL_CONVENTION, CURVATURE_CONVENTION, PRODUCT_CONVENTION, Report, max_abs


class MetricError(ModelError):
    pass


class InsufficientOrderError(ValueError):
    pass


class DependentDensitiesError(ValueError):
    pass


def _need(jet: Jet, order: int, what: str):
    if jet.order < order:
        raise InsufficientOrderError(f"{what} needs jets of order >= {order}, got {jet.order}")


@dataclass(frozen=True)
class MetricJet:
    point: tuple
    g: Jet  # (n, n)
    ginv: Jet

    @property
    def order(self):
        return self.g.order

    @property
    def dim(self):
        return self.g.shape[0]

    def values(self):
        return self.g.values()

    def truncate(self, order):
        return MetricJet(self.point, self.g.truncate(order), self.ginv.truncate(order))

    def inverse_residual(self) -> float:
        eye = np.eye(self.dim)
        prod = jet_einsum("ij,jk->ik", self.g, self.ginv).coeffs.copy()
        prod[..., 0] -= eye
        return max_abs(prod)


def _metric_exprs(model: FModel, g):
    if g is None:
        if model.metric is None:
            raise MetricError(f"model {model.name!r} has no metric")
        return model.metric
    rows = []
    for row in g:
        rows.append([x if isinstance(x, Expr) else parse_expression(str(x)) for x in row])
    return rows


def metric_jet(model: FModel, point=None, order: int = 2, g=None) -> MetricJet:
    """Metric jets from the model (or ``g``: rows of expressions or a Jet)."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    n = model.dim
    if isinstance(g, MetricJet):
        return g.truncate(order)
    if isinstance(g, Jet):
        gj = g.truncate(order)
    else:
        rows = _metric_exprs(model, g)
        gj = exprs_at(model, [x for row in rows for x in row], point, order).reshape((n, n))
    g0 = gj.values()
    if max_abs(g0 - g0.T) > 1e-12 * max(1.0, max_abs(g0)):
        raise MetricError("metric is not symmetric")
    if abs(np.linalg.det(g0)) <= 1e-14 * max(1.0, max_abs(g0)) ** n:
        raise MetricError("metric is degenerate at the point")
    eye = Jet.constant(np.eye(n), n, gj.order)
    ginv = jet_solve(gj, eye)
    return MetricJet(tuple(point), gj, ginv)


def levi_civita(g: MetricJet) -> ChristoffelJet:
    """Gamma^k_{ij} = 1/2 g^{kl} (d_i g_{lj} + d_j g_{li} - d_l g_{ij}); order drops by one."""
    _need(g.g, 1, "levi_civita")
    dg = g.g.derivatives()  # [a, b, c] = d_c g_{ab}
    first = jet_einsum("lji->lij", dg)  # d_i g_{lj}
    second = jet_einsum("lij->lij", dg)  # d_j g_{li}
    third = jet_einsum("ijl->lij", dg)  # d_l g_{ij}
    gamma_low = 0.5 * (first + second - third)
    G = jet_einsum("kl,lij->kij", g.ginv.truncate(g.order - 1), gamma_low)
    return ChristoffelJet(g.point, G)


def covariant_metric_derivative(g: Jet, gamma: Jet) -> Jet:
    """(nabla_i g)_{jk} as [i, j, k]."""
    dg = g.derivatives()  # [j, k, i]
    g0 = g.truncate(gamma.order)
    t = jet_einsum("jki->ijk", dg.truncate(gamma.order))
    a = jet_einsum("mij,mk->ijk", gamma, g0)
    b = jet_einsum("mik,jm->ijk", gamma, g0)
    return t - a - b


def metricity_residual(g: MetricJet, gamma: ChristoffelJet | None = None) -> float:
    gamma = levi_civita(g) if gamma is None else gamma
    return max_abs(covariant_metric_derivative(g.g.truncate(gamma.order + 1), gamma.gamma).values())


# invariance -------------------------------------------------------------------

def invariance_residuals(g0, c0, X0):
    """(partial, full) invariance defects at a point.

    partial[i, k] = g_{ij} c^j_{kl} X^l - g_{kj} c^j_{il} X^l
    full[u, v, w] = g(d_u o d_v, d_w) - g(d_u, d_v o d_w)
    """
    A = np.einsum("jkl,l->jk", c0, X0)  # A[j, k] = (X o)^j_k
    gA = g0 @ A
    partial = gA - gA.T
    full = np.einsum("muv,mw->uvw", c0, g0) - np.einsum("um,mvw->uvw", g0, c0)
    return partial, full


def check_invariance(g, model: FModel, X="X", point=None, tol: float = 1e-10) -> Report:
    """Partial (self-adjointness of X o) and full invariance of g.

    ``info["implication_holds"]`` records whether partial invariance together
    with cyclicity of X was accompanied by full invariance.
    """
    from .algebra import cyclic_frame

    point = model.base_point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, 0, g)
    pj = product_at(model, point, 0)
    c0, e0 = pj.c.values(), pj.e.values()
    X0 = vector_field_at(model, X, point, 0).values()
    partial, full = invariance_residuals(gm.values(), c0, X0)
    scale = max(1.0, max_abs(gm.values()) * max(max_abs(c0), 1.0) * max(max_abs(X0), 1.0))
    F = cyclic_frame(c0, e0, X0)
    norms = np.linalg.norm(F, axis=0)
    scaled_det = abs(np.linalg.det(F)) / np.prod(np.where(norms > 0, norms, 1.0)) if np.all(norms > 0) else 0.0
    cyclic = scaled_det > 1e-8
    p_ok = max_abs(partial) <= tol * scale
    f_ok = max_abs(full) <= tol * scale
    return Report(
        "invariance",
        (("partial", max_abs(partial)), ("full", max_abs(full))),
        tol * scale,
        point=tuple(point),
        order=0,
        convention_notes=(PRODUCT_CONVENTION, "partial[i,k] = g_ij c^j_kl X^l - g_kj c^j_il X^l"),
        info={"cyclic": bool(cyclic), "scaled_det": float(scaled_det),
              "implication_holds": bool((not (p_ok and cyclic)) or f_ok)},
    )


def self_adjoint_metric(A: np.ndarray, e: np.ndarray, lam) -> np.ndarray:
    """The symmetric form with g(A^i e, A^j e) = lam(A^(i+j) e), A cyclic for e.

    Any such form makes A self-adjoint; taking the Hankel entries from a
    covector keeps them consistent with the characteristic polynomial of A.
    """
    n = len(e)
    lam = np.asarray(lam, dtype=float)
    powers = [np.asarray(e, dtype=float)]
    for _ in range(2 * n - 2):
        powers.append(A @ powers[-1])
    phi = [float(lam @ v) for v in powers]
    F = np.column_stack(powers[:n])
    H = np.array([[phi[i + j] for j in range(n)] for i in range(n)])
    Finv = np.linalg.inv(F)
    return Finv.T @ H @ Finv


# Dubrovin-Novikov -------------------------------------------------------------

def _dn_parts(gm: MetricJet, V: Jet):
    """DN1 (g-symmetry of V) and DN2 (d_{nabla^g} V) defects at the point."""
    if V.order < 1 or gm.order < V.order:
        raise InsufficientOrderError("DN2 needs V of order >= 1 and g of at least the same order")
    G = levi_civita(gm.truncate(V.order))
    g0 = gm.values()
    V0 = V.values()
    gV = g0 @ V0
    dn1 = gV - gV.T
    dn2 = exterior_derivative_endo(V, G.gamma).values()
    return dn1, dn2, G


def check_dn(g, model: FModel, X="X", point=None, tol: float = 1e-10) -> Report:
    """DN1: g_{ik} V^k_j = g_{jk} V^k_i and DN2: d_{nabla^g} V = 0 for V = X o."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, 2, g)
    pj = product_at(model, point, 1)
    V = multiplication_operator(pj.c, vector_field_at(model, X, point, 1))
    dn1, dn2, _ = _dn_parts(gm, V)
    scale = max(1.0, max_abs(gm.values()) * max(1.0, max_abs(V.values())))
    return Report(
        "dubrovin_novikov",
        (("DN1", max_abs(dn1)), ("DN2", max_abs(dn2))),
        tol * scale,
        point=tuple(point),
        order=1,
        convention_notes=("V^k_j = c^k_jl X^l", CHRISTOFFEL_CONVENTION),
    )


# bridges ------------------------------------------------------------------------

def _counit_parts(gm: MetricJet, c: Jet, e: Jet):
    """theta = g(e, .), d theta and L_e g, each one order below the metric."""
    k = gm.order - 1
    theta = jet_einsum("ij,j->i", gm.g, e.truncate(gm.order))
    dth = theta.derivatives()  # [b, a] = d_a theta_b
    dtheta = dth.transpose(1, 0) - dth  # [a, b] = d_a theta_b - d_b theta_a
    dg = gm.g.derivatives()  # [a, b, k] = d_k g_ab
    de = e.truncate(gm.order).derivatives()  # [k, a] = d_a e^k
    g1 = gm.g.truncate(k)
    lie = jet_einsum("k,abk->ab", e.truncate(k), dg) + jet_einsum("kb,ka->ab", g1, de) + jet_einsum("ak,kb->ab", g1, de)
    return dtheta, lie


def connection_from_metric(g, model: FModel, point=None, order: int = 1) -> ChristoffelJet:
    """nabla_X Y = nabla^g_X Y - 1/2 (i_{X o Y} d theta)^# - 1/2 ((L_e g)(X o Y, .))^#."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, order + 1, g)
    pj = product_at(model, point, order + 1)
    LC = levi_civita(gm).gamma
    dtheta, lie = _counit_parts(gm, pj.c, pj.e)
    c = pj.c.truncate(order)
    corr = jet_einsum("mij,mb->bij", c, dtheta + lie)
    G = LC - 0.5 * jet_einsum("kb,bij->kij", gm.ginv.truncate(order), corr)
    return ChristoffelJet(tuple(point), G)


def check_gfromnabla(g, gamma: ChristoffelJet, model: FModel, point=None, tol: float = 1e-10) -> Report:
    """(nabla_X g)(Y,Z) = 1/2 dtheta(XoY,Z) + 1/2 dtheta(XoZ,Y) + 1/2 (L_e g)(XoY,Z) + 1/2 (L_e g)(XoZ,Y)."""
    point = gamma.point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, 1, g)
    pj = product_at(model, point, 1)
    Dg = covariant_metric_derivative(gm.g, gamma.gamma.truncate(0)).values()  # [i, j, k]
    dtheta, lie = _counit_parts(gm, pj.c, pj.e)
    M = (dtheta + lie).values()
    c0 = pj.c.values()
    rhs = 0.5 * np.einsum("mij,mk->ijk", c0, M) + 0.5 * np.einsum("mik,mj->ijk", c0, M)
    res = Dg - rhs
    scale = max(1.0, max_abs(gm.g.coeffs))
    return Report(
        "g_from_nabla",
        (("residual", max_abs(res)),),
        tol * scale,
        point=tuple(point),
        order=0,
        convention_notes=(CHRISTOFFEL_CONVENTION, "theta = g(e, .), d theta_ab = d_a theta_b - d_b theta_a"),
    )


def check_full_symmetry(gamma: ChristoffelJet, model: FModel, point=None, tol: float = 1e-10) -> Report:
    """nabla e = 0 and (nabla_W o)(Y, Z) symmetric in (W, Y) for a given connection."""
    from .connection import covariant_product_derivative, covariant_vector_derivative

    point = gamma.point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, 1)
    G = gamma.gamma.truncate(0)
    T = covariant_product_derivative(pj.c, G).values()
    De = covariant_vector_derivative(pj.e, G).values()
    sym = T - T.transpose(0, 2, 1, 3)
    scale = max(1.0, max_abs(pj.c.values()), max_abs(G.values()))
    return Report(
        "compatible_connection",
        (("nabla_e", max_abs(De)), ("full_symmetry", max_abs(sym))),
        tol * scale,
        point=tuple(point),
        order=0,
        convention_notes=(CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION),
    )


def levi_civita_curvature(gm: MetricJet) -> np.ndarray:
    _need(gm.g, 2, "Levi-Civita curvature")
    return riemann_jet(levi_civita(gm.truncate(2)).gamma).values()


def check_riemannian_f(g, model: FModel, point=None, tol: float = 1e-10, X="X") -> Report:
    """Full invariance of g and R^g(U,V)(W o Z) + cyclic = 0."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, 2, g)
    pj = product_at(model, point, 0)
    c0 = pj.c.values()
    R = levi_civita_curvature(gm)
    _, full = invariance_residuals(gm.values(), c0, np.zeros(model.dim))
    rcg = max_abs(three_rc_zinside(R, c0))
    norm = max(1.0, max_abs(R) * max_abs(c0))
    scale = max(1.0, max_abs(gm.values()) * max_abs(c0))
    return Report(
        "riemannian_f",
        (("invariance", max_abs(full) / scale), ("cyclic_curvature", rcg / norm)),
        tol,
        point=tuple(point),
        order=2,
        convention_notes=(CURVATURE_CONVENTION, PRODUCT_CONVENTION),
        info={"raw_cyclic_curvature": rcg, "riemann_norm": max_abs(R)},
    )


def check_nonlocal_conditions(g, model: FModel, affinors, point=None, tol: float = 1e-10) -> Report:
    """Affinor conditions for W_a = Y_a o with signs eps_a.

    ``affinors`` is a sequence of (field, eps).  Items: d_{nabla^g} W_a = 0,
    g-symmetry of W_a, pairwise commutators, and
    g^{is} R^j_{skh} = sum_a eps_a (W^j_k W^i_h - W^i_k W^j_h).
    """
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    gm = metric_jet(model, point, 2, g)
    pj = product_at(model, point, 1)
    Ws, eps = [], []
    for Y, s in affinors:
        if s not in (1, -1, 1.0, -1.0):
            raise ValueError(f"affinor sign must be +1 or -1, got {s!r}")
        Ws.append(multiplication_operator(pj.c, vector_field_at(model, Y, point, 1)))
        eps.append(float(s))
    d_res = sym_res = comm = 0.0
    for W in Ws:
        dn1, dn2, _ = _dn_parts(gm, W)
        sym_res = max(sym_res, max_abs(dn1))
        d_res = max(d_res, max_abs(dn2))
    W0 = [W.values() for W in Ws]
    for a in range(len(W0)):
        for b in range(a + 1, len(W0)):
            comm = max(comm, max_abs(W0[a] @ W0[b] - W0[b] @ W0[a]))
    R = levi_civita_curvature(gm)
    Rup = np.einsum("is,jskh->ijkh", gm.ginv.values(), R)
    quad = np.zeros_like(Rup)
    for W, s in zip(W0, eps):
        quad += s * (np.einsum("jk,ih->ijkh", W, W) - np.einsum("ik,jh->ijkh", W, W))
    scale = max(1.0, max_abs(gm.values()))
    return Report(
        "nonlocal_conditions",
        (("d_nabla_W", d_res), ("g_symmetry", sym_res), ("commuting", comm), ("curvature_quadratic", max_abs(Rup - quad))),
        tol * scale,
        point=tuple(point),
        order=2,
        convention_notes=(CURVATURE_CONVENTION, "R^{ij}_{kh} = g^{is} R^j_{skh}"),
    )


# conservation laws ----------------------------------------------------------------

@dataclass(frozen=True)
class DensitySet:
    names: tuple
    exprs: tuple

    @classmethod
    def from_model(cls, model: FModel, names=None):
        names = tuple(model.densities) if names is None else tuple(names)
        return cls(names, tuple(model.densities[n] for n in names))

    @classmethod
    def parse(cls, mapping):
        names = tuple(mapping)
        return cls(names, tuple(x if isinstance(x, Expr) else parse_expression(str(x)) for x in mapping.values()))

    def jets(self, model: FModel, point, order) -> Jet:
        return exprs_at(model, list(self.exprs), point, order)

    def differentials(self, model: FModel, point) -> np.ndarray:
        """Rows dh^a at the point."""
        return self.jets(model, point, 1).gradient()


def conservation_check(model: FModel, X="X", gamma: ChristoffelJet | None = None, densities=None, point=None,
                       tol: float = 1e-9) -> Report:
    """Flux closedness, Hessian invariance, curvature pairing and 3RC for densities."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    n = model.dim
    if densities is None:
        densities = DensitySet.from_model(model)
    elif not isinstance(densities, DensitySet):
        densities = DensitySet.parse(densities)
    pj = product_at(model, point, 2)
    Xj = vector_field_at(model, X, point, 2)
    if gamma is None:
        gamma = natural_connection_from_jets(pj.c, pj.e, Xj, point)
    G1 = gamma.gamma.truncate(1)
    G0 = G1.values()
    h = densities.jets(model, point, 2)
    dh = h.derivatives()  # [a, i] order 1
    c1 = pj.c.truncate(1)
    c0 = c1.values()
    A = multiplication_operator(c1, Xj.truncate(1))  # [j, i] = c^j_il X^l
    flux = jet_einsum("aj,ji->ai", dh, A)  # (C_X^* dh^a)_i
    dflux = flux.derivatives().values()  # [a, i, k] = d_k flux_i
    closed = dflux - dflux.transpose(0, 2, 1)

    dh0 = dh.values()
    hess = dh.derivatives().values()  # [a, i, j] = d_j d_i h
    H = hess - np.einsum("kij,ak->aij", G0, dh0)
    H_sym = H - H.transpose(0, 2, 1)
    # H(X o Y, Z) - H(X, Y o Z) on basis triples [a, x, y, z]
    H_inv = np.einsum("mxy,amz->axyz", c0, H) - np.einsum("myz,axm->axyz", c0, H)
    e0 = pj.e.values()
    theta = np.einsum("aij,i->aj", H, e0)
    H_theta = H - np.einsum("mij,am->aij", c0, theta)

    R = riemann_jet(G1).values()
    zin = three_rc_zinside(R, c0)
    pairing = np.einsum("ak,kuvwz->auvwz", dh0, zin)

    per_density = {}
    for a, name in enumerate(densities.names):
        per_density[name] = {
            "closedness": max_abs(closed[a]),
            "hessian_symmetry": max_abs(H_sym[a]),
            "hessian_invariance": max_abs(H_inv[a]),
            "hessian_theta": max_abs(H_theta[a]),
            "curvature_pairing": max_abs(pairing[a]),
        }
    items = [
        ("closedness", max_abs(closed)),
        ("hessian_symmetry", max_abs(H_sym)),
        ("hessian_invariance", max_abs(H_inv)),
        ("curvature_pairing", max_abs(pairing)),
    ]
    info = {"per_density": per_density, "hessian_theta": max_abs(H_theta)}
    independent = len(densities.names) == n and abs(np.linalg.det(dh0)) > tol
    info["independent"] = bool(independent)
    ok = all(v <= tol for _, v in items)
    if independent and ok:
        rep = check_3rc(R, c0, tol)
        items.append(("three_rc", rep.max_residual))
        info["three_rc_verdict"] = rep.verdict
    else:
        info["three_rc_skipped"] = "dependent differentials" if not independent else "densities fail (a)-(c)"
    return Report(
        "conservation",
        tuple(items),
        tol,
        point=tuple(point),
        order=1,
        convention_notes=(CURVATURE_CONVENTION, CHRISTOFFEL_CONVENTION, "H_ij = d_i d_j h - Gamma^k_ij d_k h"),
        info=info,
    )
