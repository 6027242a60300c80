"""Symmetries of F-systems: power-series solutions of d_nabla(Y o) = 0,
commuting-flow checks and the diagonal (Riemann invariant) linear system.

The series solver works in a chart where the unit field is d/dx^1.  Data
is prescribed along the x^1 axis through the base point and propagated into
the transverse directions x^2, ..., x^n one after the other, each time using

    d_i Y^k = c^k_{ir} d_1 Y^r - Gamma^k_{ir} Y^r

as a coefficient recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    FModel,
    ModelData,
    ModelError,
    exprs_at,
    multiplication_operator,
    product_at,
    vector_field_at,
)
from .connection import (
    ChristoffelJet,
    covariant_vector_derivative,
    exterior_derivative_endo,
    natural_connection_from_jets,
)
from .expr import Add, Const, Mul, Neg, Sub, coordinates, substitute_linear
from .jet import Jet, JetDomainError, UniSeries, compose_affine, evaluate_polynomial, get_space, jet_einsum
from .report import CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION, Report, max_abs


class NonConstantUnitError(ModelError):
    """Chart adaptation needs a unit field with constant components."""


class HyperbolicityError(ValueError):
    """Two characteristic velocities coincide."""


class NotDiagonalError(ModelError):
    """The product is not the diagonal semisimple one in these coordinates."""


def _series_list(data, order=None):
    comps = data.components if hasattr(data, "components") else data
    out = []
    for s in comps:
        s = s if isinstance(s, UniSeries) else UniSeries(s)
        out.append(s)
    if order is not None:
        short = [s.order for s in out if s.order < order]
        if short:
            raise ValueError(f"data of order {min(short)} is shorter than the requested order {order}")
        out = [s.truncate(order) for s in out]
    return tuple(out)


@dataclass(frozen=True)
class CauchyData:
    """Components of a field along the unit curve through the base point."""

    components: tuple

    def __post_init__(self):
        comps = tuple(s if isinstance(s, UniSeries) else UniSeries(s) for s in self.components)
        if len({s.order for s in comps}) > 1:
            raise ValueError("all components must share one order")
        object.__setattr__(self, "components", comps)

    @property
    def order(self):
        return self.components[0].order

    def array(self):
        return np.array([s.coeffs for s in self.components])


@dataclass(frozen=True)
class TsarevData:
    """phi_a(s) = w^a on the a-th coordinate axis through the base point."""

    components: tuple

    def __post_init__(self):
        comps = tuple(s if isinstance(s, UniSeries) else UniSeries(s) for s in self.components)
        if len({s.order for s in comps}) > 1:
            raise ValueError("all components must share one order")
        object.__setattr__(self, "components", comps)

    @property
    def order(self):
        return self.components[0].order

    def array(self):
        return np.array([s.coeffs for s in self.components])


@dataclass(frozen=True)
class SeriesField:
    """Vector field given by truncated Taylor series around ``point``."""

    point: tuple
    jet: Jet  # shape (n,)
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(p) for p in self.point))

    @property
    def order(self):
        return self.jet.order

    @property
    def dim(self):
        return self.jet.shape[0]

    def jets_at(self, point, order) -> Jet:
        shift = np.asarray(point, dtype=float) - np.array(self.point)
        return compose_affine(self.jet, shift, order=order)

    def __call__(self, point) -> np.ndarray:
        return evaluate_polynomial(self.jet, np.asarray(point, dtype=float) - np.array(self.point))

    def coefficients(self) -> np.ndarray:
        return self.jet.coeffs.copy()

    def along(self, direction) -> list:
        """Series of the components along ``point + t * direction``."""
        d = np.asarray(direction, dtype=float).reshape(-1, 1)
        line = compose_affine(self.jet, np.zeros(self.dim), d)
        return [UniSeries(line.coeffs[k]) for k in range(self.dim)]

    def axis_series(self, axis) -> UniSeries:
        """Component ``axis`` restricted to the ``axis``-th coordinate line."""
        return self.along(np.eye(self.dim)[axis])[axis]


# chart adaptation ---------------------------------------------------------------

def _is_constant(ex):
    return not coordinates(ex)


def _const_value(ex):
    from .expr import eval_float

    return eval_float(ex, {})


def adapting_matrix(model: FModel) -> np.ndarray:
    """Matrix P with x = P y and e = d/dy^1: columns e, then d_a for a != p."""
    if not all(_is_constant(ex) for ex in model.e):
        raise NonConstantUnitError("chart adaptation needs a unit field with constant components")
    e0 = np.array([_const_value(ex) for ex in model.e])
    n = len(e0)
    p = int(np.argmax(np.abs(e0)))
    if e0[p] == 0:
        raise NonConstantUnitError("the unit field vanishes")
    cols = [e0] + [np.eye(n)[a] for a in range(n) if a != p]
    return np.column_stack(cols)


def _lincomb(terms):
    """Expression for sum(coef * expr) with constant folding."""
    const = 0.0
    parts = []
    for coef, ex in terms:
        if coef == 0:
            continue
        if _is_constant(ex):
            const += coef * _const_value(ex)
        else:
            parts.append((coef, ex))
    node = None
    for coef, ex in parts:
        mag = abs(coef)
        piece = ex if mag == 1 else Mul(Const(float(mag)), ex)
        if node is None:
            node = piece if coef > 0 else Neg(piece)
        else:
            node = Add(node, piece) if coef > 0 else Sub(node, piece)
    if node is None:
        return Const(float(const))
    if const > 0:
        node = Add(node, Const(float(const)))
    elif const < 0:
        node = Sub(node, Const(float(-const)))
    return node


def _clean(x, tol=1e-15):
    x = np.array(x, dtype=float)
    x[np.abs(x) < tol] = 0.0
    return x


def adapt_chart(model: FModel, names=None) -> FModel:
    """Rewrite ``model`` in linear coordinates y with x = P y, e = d/dy^1."""
    P = adapting_matrix(model)
    n = model.dim
    if np.array_equal(P, np.eye(n)):
        return model
    Pinv = _clean(np.linalg.inv(P))
    names = list(names) if names is not None else [f"y{k + 1}" for k in range(n)]
    sub = lambda ex: substitute_linear(ex, model.coords, P, None, names)
    csub = {key: sub(ex) for key, ex in model.c.items()}
    c = {}
    for a in range(n):
        for b in range(n):
            for cc in range(n):
                terms = []
                for (k, i, j), ex in csub.items():
                    coef = Pinv[cc, k] * P[i, a] * P[j, b]
                    if coef != 0:
                        terms.append((coef, ex))
                node = _lincomb(terms)
                if not (isinstance(node, Const) and node.value == 0):
                    c[(cc, a, b)] = node
    e = [Const(1.0)] + [Const(0.0)] * (n - 1)

    def vec(comps):
        comps = [sub(ex) for ex in comps]
        return [_lincomb([(Pinv[r, k], comps[k]) for k in range(n)]) for r in range(n)]

    fields = {name: vec(comps) for name, comps in model.fields.items()}
    metric = None
    if model.metric is not None:
        gs = [[sub(ex) for ex in row] for row in model.metric]
        metric = [
            [_lincomb([(P[i, a] * P[j, b], gs[i][j]) for i in range(n) for j in range(n)]) for b in range(n)]
            for a in range(n)
        ]
    densities = {name: sub(ex) for name, ex in model.densities.items()}
    data = {}
    for name, d in model.data.items():
        if d.kind != "e":
            continue
        if d.series is not None:
            arr = Pinv @ np.array(d.series, dtype=float)
            data[name] = ModelData("e", series=tuple(tuple(r) for r in arr))
        else:
            data[name] = ModelData("e", exprs=tuple(_lincomb([(Pinv[r, k], d.exprs[k]) for k in range(n)]) for r in range(n)), var=d.var)
    point = Pinv @ model.base_point
    return FModel(
        model.name + "-adapted",
        names,
        c,
        e,
        fields=fields,
        flow=model.flow,
        metric=metric,
        densities=densities,
        data=data,
        point=tuple(point),
    )


# series solver --------------------------------------------------------------------

def _layer_tables(nvars, K):
    """Per transverse direction i and layer m: (src indices in order K-1, dst in order K)."""
    hi = get_space(nvars, K)
    lo = get_space(nvars, K - 1)
    tables = {}
    for i in range(1, nvars):
        for m in range(K):
            src, dst = [], []
            for q, alpha in enumerate(lo.alphas):
                if alpha[i] != m or any(alpha[j] for j in range(i + 1, nvars)):
                    continue
                beta = list(alpha)
                beta[i] += 1
                src.append(q)
                dst.append(hi.index[tuple(beta)])
            tables[(i, m)] = (np.array(src, dtype=int), np.array(dst, dtype=int))
    return tables


def solve_symmetry_series(model: FModel, X="X", point=None, data=None, K: int = 6, gamma: ChristoffelJet | None = None,
                          check_compat: bool = True) -> SeriesField:
    """Series solution of d_nabla(Y o) = 0 in an adapted chart.

    ``data`` holds the components of Y along the x^1 axis through ``point``
    (CauchyData, UniSeries list or coefficient array) of order >= K.  The
    returned SeriesField reproduces the data on the axis and solves every
    transverse equation to degree K - 1.
    """
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    n = model.dim
    series = _series_list(data, K)
    if len(series) != n:
        raise ValueError(f"need {n} data components, got {len(series)}")
    e_jet = exprs_at(model, model.e, point, max(K, 1))
    target = np.zeros_like(e_jet.coeffs)
    target[0, 0] = 1.0
    if max_abs(e_jet.coeffs - target) > 1e-13:
        from .curvature import ChartNotAdaptedError

        raise ChartNotAdaptedError("the unit field must be d/dx^1; call adapt_chart first")

    space = get_space(n, K)
    Y = np.zeros((n, space.size))
    for m in range(K + 1):
        alpha = (m,) + (0,) * (n - 1)
        Y[:, space.index[alpha]] = [s.coeffs[m] for s in series]

    info = {}
    if K >= 1 and n > 1:
        pj = product_at(model, point, K)
        Xj = vector_field_at(model, X, point, K)
        if gamma is None:
            gamma = natural_connection_from_jets(pj.c, pj.e, Xj, point)
        G = gamma.gamma.truncate(K - 1)
        c = pj.c.truncate(K - 1)
        tables = _layer_tables(n, K)
        for i in range(1, n):
            ci = c[:, i, :]
            Gi = G[:, i, :]
            for m in range(K):
                Yj = Jet(space, Y)
                rhs = jet_einsum("kr,r->k", ci, Yj.partial(0)) - jet_einsum("kr,r->k", Gi, Yj.truncate(K - 1))
                src, dst = tables[(i, m)]
                if len(src):
                    Y[:, dst] = rhs.coeffs[:, src] / (m + 1)
        if check_compat and n >= 3:
            from .curvature import check_3rc, riemann_jet

            if gamma.order >= 1:
                R = riemann_jet(gamma.gamma.truncate(1)).values()
            else:
                pj2 = product_at(model, point, 2)
                g2 = natural_connection_from_jets(pj2.c, pj2.e, vector_field_at(model, X, point, 2), point)
                R = riemann_jet(g2.gamma).values()
            rep = check_3rc(R, pj.c.values())
            info["three_rc"] = rep.verdict
            info["three_rc_residual"] = rep.max_residual
    return SeriesField(tuple(point), Jet(space, Y), info)


def symmetry_residual_series(model: FModel, Y: SeriesField, X="X") -> float:
    """Max coefficient of d_i Y - F_i(Y, d_1 Y) up to degree K-1 (adapted chart)."""
    K = Y.order
    n = Y.dim
    if K < 1 or n < 2:
        return 0.0
    pj = product_at(model, Y.point, K)
    Xj = vector_field_at(model, X, Y.point, K)
    G = natural_connection_from_jets(pj.c, pj.e, Xj, Y.point).gamma.truncate(K - 1)
    c = pj.c.truncate(K - 1)
    worst = 0.0
    for i in range(1, n):
        rhs = jet_einsum("kr,r->k", c[:, i, :], Y.jet.partial(0)) - jet_einsum("kr,r->k", G[:, i, :], Y.jet.truncate(K - 1))
        worst = max(worst, max_abs((Y.jet.partial(i) - rhs).coeffs))
    return worst


def solve_symmetry(model: FModel, X="X", data=None, K: int = 6, point=None) -> SeriesField:
    """Series symmetry in the model's own chart.

    ``data`` gives the components (in the model's frame) of Y along the unit
    curve t -> point + t e through the base point.
    """
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    P = adapting_matrix(model)
    Pinv = _clean(np.linalg.inv(P))
    adapted = adapt_chart(model)
    series = _series_list(data, K)
    arr = Pinv @ np.array([s.coeffs for s in series])
    y0 = Pinv @ point
    Ya = solve_symmetry_series(adapted, X, y0, arr, K)
    # Y(x0 + xi) = P Ya(y0 + P^{-1} xi)
    moved = compose_affine(Ya.jet, np.zeros(model.dim), Pinv)
    jet = jet_einsum("ak,k->a", P, moved)
    return SeriesField(tuple(point), jet, Ya.info)


def data_from_model(model: FModel, name: str, K: int):
    d = model.data[name]
    return d.uniseries(K)


# checks ------------------------------------------------------------------------------

def _connection(model, X, point, order):
    pj = product_at(model, point, order + 1)
    Xj = vector_field_at(model, X, point, order + 1)
    return pj, natural_connection_from_jets(pj.c, pj.e, Xj, point).gamma


def check_symmetry_equation(model: FModel, X="X", Y="w", point=None, tol: float = 1e-10) -> Report:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj, G = _connection(model, X, point, 0)
    c = pj.c.truncate(1)
    Yj = vector_field_at(model, Y, point, 1)
    CY = multiplication_operator(c, Yj)
    dCY = exterior_derivative_endo(CY, G).values()
    DY = covariant_vector_derivative(Yj, G).values()
    c0 = c.values()
    W = DY @ pj.e.values()
    shift_defect = DY - np.einsum("kil,l->ki", c0, W)
    scale = max(1.0, max_abs(Yj.values()), max_abs(c0))
    return Report(
        "symmetry_equation",
        (("d_nabla_CY", max_abs(dCY)), ("nabla_U_Y_vs_U_nabla_e_Y", max_abs(shift_defect))),
        tol * scale,
        point=tuple(point),
        order=1,
        convention_notes=(CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION),
    )


def check_commuting_flows(model: FModel, Y1="X", Y2="w", point=None, tol: float = 1e-10, X="X") -> Report:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj, G = _connection(model, X, point, 0)
    c = pj.c.truncate(1)
    A = multiplication_operator(c, vector_field_at(model, Y1, point, 1))
    B = multiplication_operator(c, vector_field_at(model, Y2, point, 1))
    dA = exterior_derivative_endo(A, G).values()
    dB = exterior_derivative_endo(B, G).values()
    A0, B0 = A.values(), B.values()
    comm = A0 @ B0 - B0 @ A0
    # (dA)(U,BV) + (dA)(V,BU) - (dB)(U,AV) - (dB)(V,AU) on d_a, d_b
    t = np.einsum("kaj,jb->kab", dA, B0) - np.einsum("kaj,jb->kab", dB, A0)
    cross = t + t.transpose(0, 2, 1)
    scale = max(1.0, max_abs(A0), max_abs(B0))
    return Report(
        "commuting_flows",
        (("AB_minus_BA", max_abs(comm)), ("d_nabla_cross", max_abs(cross))),
        tol * scale,
        point=tuple(point),
        order=1,
        convention_notes=(CHRISTOFFEL_CONVENTION, PRODUCT_CONVENTION),
    )


# diagonal systems ----------------------------------------------------------------------

def _require_diagonal(model: FModel):
    n = model.dim
    for (k, i, j), ex in model.c.items():
        want = 1.0 if k == i == j else 0.0
        if not _is_constant(ex) or _const_value(ex) != want:
            raise NotDiagonalError("the product must be c^i_{jk} = delta^i_j delta^i_k")
    for k in range(n):
        if (k, k, k) not in model.c:
            raise NotDiagonalError("the product must be c^i_{jk} = delta^i_j delta^i_k")


def tsarev_coefficients(model: FModel, X="X", point=None, order: int = 0) -> Jet:
    """a[i, j] = d_j v^i / (v^j - v^i) for i != j (zero on the diagonal)."""
    _require_diagonal(model)
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    n = model.dim
    v = vector_field_at(model, X, point, order + 1)
    dv = v.derivatives()  # [i, j] = d_j v^i
    vl = v.truncate(order)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i == j:
                row.append(dv[i, j] * 0.0)
                continue
            try:
                row.append(dv[i, j] / (vl[j] - vl[i]))
            except JetDomainError:
                raise HyperbolicityError(f"velocities v^{i + 1} and v^{j + 1} coincide at {tuple(point)}") from None
        rows.append(row)
    from .jet import stack

    return stack([stack(r) for r in rows])


def tsarev_system(model: FModel, X="X", w="w", point=None, tol: float = 1e-12) -> Report:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    a = tsarev_coefficients(model, X, point, 0).values()
    W = vector_field_at(model, w, point, 1)
    dw = W.derivatives().values()  # [i, j] = d_j w^i
    w0 = W.values()
    res = dw - a * (w0[None, :] - w0[:, None])
    np.fill_diagonal(res, 0.0)
    scale = max(1.0, max_abs(w0), max_abs(dw))
    return Report(
        "tsarev_system",
        (("linear_system", max_abs(res)),),
        tol * scale,
        point=tuple(point),
        order=1,
        convention_notes=("a[i,j] = d_j v^i / (v^j - v^i); residual d_j w^i - a[i,j] (w^j - w^i), i != j",),
        info={"a": a},
    )


def tsarev_series(model: FModel, X="X", phi=None, K: int = 6, point=None) -> SeriesField:
    """Solve the diagonal linear system from axis data, degree by degree."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    n = model.dim
    series = _series_list(phi, K)
    space = get_space(n, K)
    w = np.zeros((n, space.size))
    w[:, 0] = [s.coeffs[0] for s in series]
    if K >= 1:
        a = tsarev_coefficients(model, X, point, K - 1)
        lo = get_space(n, K - 1)
        by_degree = [[] for _ in range(K + 1)]
        for q, alpha in enumerate(space.alphas):
            by_degree[sum(alpha)].append((q, alpha))
        for m in range(1, K + 1):
            wj = Jet(space, w).truncate(K - 1)
            diff = wj[None, :] - wj[:, None]  # [i, j] = w^j - w^i
            rhs = (a * diff).coeffs
            for q, alpha in by_degree[m]:
                for i in range(n):
                    if alpha[i] == m:
                        w[i, q] = series[i].coeffs[m]
                        continue
                    j = next(j for j in range(n) if j != i and alpha[j] > 0)
                    beta = list(alpha)
                    beta[j] -= 1
                    w[i, q] = rhs[i, j, lo.index[tuple(beta)]] / alpha[j]
    return SeriesField(tuple(point), Jet(space, w))


def _unit_vector(model: FModel, point):
    return exprs_at(model, model.e, point, 0).values()


def transform_tsarev_to_e(model: FModel, X="X", phi=None, K: int = 6, point=None) -> CauchyData:
    """Axis data of the diagonal system -> data on the unit curve."""
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    w = tsarev_series(model, X, phi, K, point)
    return CauchyData(tuple(w.along(_unit_vector(model, point))))


def transform_e_to_tsarev(model: FModel, X="X", Y0=None, K: int = 6, point=None) -> TsarevData:
    """Data on the unit curve -> axis data of the diagonal system."""
    _require_diagonal(model)
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    Y = solve_symmetry(model, X, Y0, K, point)
    return TsarevData(tuple(Y.axis_series(a) for a in range(model.dim)))
