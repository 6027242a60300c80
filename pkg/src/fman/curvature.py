"""Curvature of jet-valued connections, the cyclic curvature (3RC) tests and
the first-step obstruction tensors of the symmetry series solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import FModel, product_at, vector_field_at
from .connection import ChristoffelJet, natural_connection_from_jets
from .jet import Jet, jet_einsum
from .report import CHRISTOFFEL_CONVENTION, CURVATURE_CONVENTION, PRODUCT_CONVENTION, Report, max_abs


class ChartNotAdaptedError(ValueError):
    """The unit field is not the first coordinate field of the chart."""


def riemann_jet(gamma: Jet) -> Jet:
    """R[k, s, i, j] as a jet of order ``gamma.order - 1``."""
    if gamma.order < 1:
        raise ValueError("curvature needs Christoffel jets of order >= 1")
    dG = gamma.derivatives()  # [k, a, b, i] = d_i G^k_{ab}
    G = gamma.truncate(gamma.order - 1)
    lin = dG.transpose(0, 2, 3, 1)  # [k, s, i, j] = d_i G^k_{js}
    lin = lin - lin.transpose(0, 1, 3, 2)
    quad = jet_einsum("kir,rjs->ksij", G, G)
    return lin + quad - quad.transpose(0, 1, 3, 2)


@dataclass(frozen=True)
class RiemannAtPoint:
    point: tuple
    R: np.ndarray  # R[k, s, i, j]

    def bianchi_residual(self) -> float:
        R = self.R
        cyc = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
        return max_abs(cyc)

    def antisymmetry_residual(self) -> float:
        return max_abs(self.R + self.R.transpose(0, 1, 3, 2))

    @property
    def norm(self) -> float:
        return max_abs(self.R)


def riemann_tensor(gamma: ChristoffelJet) -> RiemannAtPoint:
    return RiemannAtPoint(gamma.point, riemann_jet(gamma.gamma).values())


def three_rc_zinside(R, c):
    """R(U,V)(W o Z) + R(V,W)(U o Z) + R(W,U)(V o Z) as [k, u, v, w, z]."""
    out = np.einsum("ksuv,swz->kuvwz", R, c)
    out += np.einsum("ksvw,suz->kuvwz", R, c)
    out += np.einsum("kswu,svz->kuvwz", R, c)
    return out


def three_rc_outside(R, c):
    """W o R(U,V)Z + U o R(V,W)Z + V o R(W,U)Z as [k, u, v, w, z]."""
    out = np.einsum("kws,szuv->kuvwz", c, R)
    out += np.einsum("kus,szvw->kuvwz", c, R)
    out += np.einsum("kvs,szwu->kuvwz", c, R)
    return out


def _curv_apply(R, U, V, Y):
    return np.einsum("ksij,i,j,s->k", R, U, V, Y)


def _prod(c, U, V):
    return np.einsum("kij,i,j->k", c, U, V)


def _invariant_forms(R, c):
    """Both cyclic identities evaluated field-by-field on coordinate 4-tuples."""
    n = c.shape[0]
    E = np.eye(n)
    zin = 0.0
    out = 0.0
    for u in range(n):
        for v in range(n):
            for w in range(n):
                U, V, W = E[u], E[v], E[w]
                for z in range(n):
                    Z = E[z]
                    a = (
                        _curv_apply(R, U, V, _prod(c, W, Z))
                        + _curv_apply(R, V, W, _prod(c, U, Z))
                        + _curv_apply(R, W, U, _prod(c, V, Z))
                    )
                    b = (
                        _prod(c, W, _curv_apply(R, U, V, Z))
                        + _prod(c, U, _curv_apply(R, V, W, Z))
                        + _prod(c, V, _curv_apply(R, W, U, Z))
                    )
                    zin = max(zin, max_abs(a))
                    out = max(out, max_abs(b))
    return zin, out


def check_3rc(R, c, tol: float = 1e-10, point=None) -> Report:
    """Cyclic curvature identities for curvature ``R`` and product ``c`` at a point.

    Items are normalized by max(|R| |c|, 1) (max-entry norms); raw values
    are kept in ``info``.
    """
    if isinstance(R, RiemannAtPoint):
        point = R.point if point is None else point
        R = R.R
    if isinstance(c, Jet):
        c = c.values()
    R = np.asarray(R, dtype=float)
    c = np.asarray(c, dtype=float)
    zin = max_abs(three_rc_zinside(R, c))
    out = max_abs(three_rc_outside(R, c))
    zin_inv, out_inv = _invariant_forms(R, c)
    norm = max(max_abs(R) * max_abs(c), 1.0)
    raw = {"zinside": zin, "outside": out, "zinside_invariant": zin_inv, "outside_invariant": out_inv}
    return Report(
        "three_rc",
        tuple((k, v / norm) for k, v in raw.items()),
        tol,
        point=tuple(point) if point is not None else (),
        convention_notes=(CURVATURE_CONVENTION, PRODUCT_CONVENTION),
        info={"raw": raw, "normalization": norm, "riemann_norm": max_abs(R)},
    )


def natural_curvature(model: FModel, X="X", point=None, theta=None, aux=None):
    """Natural connection (order 1) and its curvature at ``point``."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, 2)
    Xj = vector_field_at(model, X, point, 2)
    gamma = natural_connection_from_jets(pj.c, pj.e, Xj, point, theta, aux)
    return gamma, riemann_tensor(gamma), pj


def check_3rc_model(model: FModel, X="X", point=None, tol: float = 1e-10) -> Report:
    gamma, R, pj = natural_curvature(model, X, point)
    return check_3rc(R, pj.c.values(), tol, point=gamma.point)


# obstruction tensors ----------------------------------------------------------------

@dataclass(frozen=True)
class ObstructionTensors:
    """Coefficients of the cross-derivative obstruction, arrays [k, i, j, s]
    with i, j running over the transverse directions 2..n (0-based 1..n-1)."""

    point: tuple
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    B_from_curvature: np.ndarray
    d1c: float = 0.0
    info: dict = field(default_factory=dict)

    def residuals(self) -> dict:
        return {
            "C": max_abs(self.C),
            "A": max_abs(self.A),
            "B_vs_curvature": max_abs(self.B - self.B_from_curvature),
            "B": max_abs(self.B),
        }


def _require_adapted(e: Jet, tol=1e-13):
    target = np.zeros_like(e.coeffs)
    target[0, 0] = 1.0
    if max_abs(e.coeffs - target) > tol:
        raise ChartNotAdaptedError("the unit field must equal d/dx^1 identically; adapt the chart first")


def obstruction_from_jets(c: Jet, e: Jet, gamma: Jet, point=()) -> ObstructionTensors:
    """Obstruction tensors from c (order >= 2), e, and Gamma (order >= 1)."""
    _require_adapted(e)
    n = c.shape[0]
    c1 = c.truncate(1)
    c0 = c.values()
    dc = c1.derivatives().values()  # [k, j, s, i] = d_i c^k_{js}
    G = gamma.truncate(1)
    G0 = G.values()
    dG = G.derivatives().values()  # [k, a, b, i] = d_i G^k_{ab}

    # C^k_{ijs} = c^k_{jr} c^r_{is} - c^k_{ir} c^r_{js}
    cc = np.einsum("kjr,ris->kijs", c0, c0)
    C = cc - cc.transpose(0, 2, 1, 3)
    # A: antisymmetrized covariant derivative of c, with the d_1 c terms dropped
    dcc = dc.transpose(0, 3, 1, 2)  # [k, i, j, s] = d_i c^k_{js}
    t1 = dcc - dcc.transpose(0, 2, 1, 3)
    cG = np.einsum("kjr,ris->kijs", c0, G0)
    Gc = np.einsum("kjr,ris->kijs", G0, c0)
    A = t1 - (cG - cG.transpose(0, 2, 1, 3)) - (Gc - Gc.transpose(0, 2, 1, 3))
    # B
    d1G = dG[..., 0]  # [r, i, s] = d_1 G^r_{is}
    cd1G = np.einsum("kjr,ris->kijs", c0, d1G)
    dGt = dG.transpose(0, 3, 1, 2)  # [k, i, j, s] = d_i G^k_{js}
    GG = np.einsum("kjr,ris->kijs", G0, G0)
    B = -(cd1G - cd1G.transpose(0, 2, 1, 3)) - (dGt - dGt.transpose(0, 2, 1, 3)) + (GG - GG.transpose(0, 2, 1, 3))

    R = riemann_jet(G).values()  # [k, s, i, j]
    Rksij = R.transpose(0, 2, 3, 1)  # [k, i, j, s]
    R1 = R[:, :, 0, :]  # [r, s, j] = R^r_{s1j}
    cR = np.einsum("kjr,rsi->kijs", c0, R1)
    B_curv = -Rksij - (cR - cR.transpose(0, 2, 1, 3))

    sl = (slice(None), slice(1, n), slice(1, n), slice(None))
    return ObstructionTensors(
        tuple(point),
        C[sl],
        A[sl],
        B[sl],
        B_curv[sl],
        d1c=max_abs(dc[..., 0]),
        info={"R_1_vs_d1Gamma": max_abs(R1.transpose(0, 2, 1) - d1G)},
    )


def obstruction_tensors(model: FModel, X="X", point=None, gamma: ChristoffelJet | None = None) -> ObstructionTensors:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, 2)
    _require_adapted(pj.e)
    if gamma is None:
        Xj = vector_field_at(model, X, point, 2)
        gamma = natural_connection_from_jets(pj.c, pj.e, Xj, point)
    return obstruction_from_jets(pj.c, pj.e, gamma.gamma, point)


def check_obstructions(model: FModel, X="X", point=None, tol: float = 1e-10) -> Report:
    ob = obstruction_tensors(model, X, point)
    res = ob.residuals()
    return Report(
        "obstruction_tensors",
        (("C", res["C"]), ("A", res["A"]), ("B_vs_curvature", res["B_vs_curvature"])),
        tol,
        point=ob.point,
        order=1,
        convention_notes=(CURVATURE_CONVENTION, CHRISTOFFEL_CONVENTION),
        info={"B": res["B"], "d1_c": ob.d1c, **ob.info},
    )
