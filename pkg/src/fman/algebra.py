"""F-manifold chart models, the product as jets, and algebraic checks."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Const, Expr, eval_expr_jet, parse_expression, to_string
from .jet import Jet, jet_einsum, get_space
from .report import PRODUCT_CONVENTION, Report, max_abs


class ModelError(ValueError):
    pass


class ModelDimensionError(ModelError):
    pass


class UnknownFieldError(ModelError):
    pass


def _as_expr(x) -> Expr:
    if isinstance(x, str):
        return parse_expression(x)
    if isinstance(x, (int, float, np.integer, np.floating)):
        return Const(float(x))
    return x


@dataclass(frozen=True)
class ModelData:
    """One-variable data attached to a model: symmetry data on the unit curve
    (``kind="e"``) or axis data for the diagonal linear system (``kind="tsarev"``).

    Either ``series`` (coefficient lists) or ``exprs`` in the variable ``var``.
    """

    kind: str
    series: tuple | None = None
    exprs: tuple | None = None
    var: str = "t"

    def uniseries(self, order):
        from .jet import UniSeries

        if self.series is not None:
            return [UniSeries(s).padded(order) for s in self.series]
        return [UniSeries(eval_expr_jet(ex, [self.var], [0.0], order).coeffs) for ex in self.exprs]


@dataclass(frozen=True)
class FModel:
    name: str
    coords: tuple
    c: Mapping
    e: tuple
    fields: Mapping = field(default_factory=dict)
    flow: str | None = None
    metric: tuple | None = None
    densities: Mapping = field(default_factory=dict)
    data: Mapping = field(default_factory=dict)
    point: tuple | None = None

    def __post_init__(self):
        n = len(self.coords)
        object.__setattr__(self, "coords", tuple(self.coords))
        if len(set(self.coords)) != n:
            raise ModelError("coordinate names must be distinct")
        c = {}
        for key, ex in dict(self.c).items():
            k, i, j = key
            if not all(0 <= v < n for v in key):
                raise ModelDimensionError(
                    f"structure function index {tuple(v + 1 for v in key)} outside dimension {n}"
                )
            c[(k, i, j)] = _as_expr(ex)
        object.__setattr__(self, "c", c)
        if len(self.e) != n:
            raise ModelDimensionError(f"unit field has {len(self.e)} components, expected {n}")
        object.__setattr__(self, "e", tuple(_as_expr(x) for x in self.e))
        fields = {}
        for name, comps in dict(self.fields).items():
            if len(comps) != n:
                raise ModelDimensionError(f"field {name!r} has {len(comps)} components, expected {n}")
            fields[name] = tuple(_as_expr(x) for x in comps)
        object.__setattr__(self, "fields", fields)
        if self.flow is not None and self.flow not in fields:
            raise UnknownFieldError(f"flow field {self.flow!r} is not defined")
        if self.metric is not None:
            g = tuple(tuple(_as_expr(x) for x in row) for row in self.metric)
            if len(g) != n or any(len(row) != n for row in g):
                raise ModelDimensionError(f"metric must be {n}x{n}")
            object.__setattr__(self, "metric", g)
        object.__setattr__(self, "densities", {k: _as_expr(v) for k, v in dict(self.densities).items()})
        object.__setattr__(self, "data", dict(self.data))
        point = tuple(float(p) for p in (self.point if self.point is not None else [0.0] * n))
        if len(point) != n:
            raise ModelDimensionError(f"base point has {len(point)} entries, expected {n}")
        object.__setattr__(self, "point", point)
        allowed = set(self.coords)
        for ex in self._all_exprs():
            from .expr import coordinates

            extra = coordinates(ex) - allowed
            if extra:
                raise ModelError(f"unknown coordinate(s) {sorted(extra)} in {to_string(ex)!r}")

    def _all_exprs(self):
        yield from self.c.values()
        yield from self.e
        for comps in self.fields.values():
            yield from comps
        if self.metric is not None:
            for row in self.metric:
                yield from row
        yield from self.densities.values()

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def base_point(self) -> np.ndarray:
        return np.array(self.point)

    def field(self, name: str):
        if name == "e":
            return self.e
        try:
            return self.fields[name]
        except KeyError:
            raise UnknownFieldError(f"model {self.name!r} has no field {name!r}") from None

    def flow_name(self) -> str:
        if self.flow is not None:
            return self.flow
        if "X" in self.fields:
            return "X"
        raise UnknownFieldError(f"model {self.name!r} does not designate a flow field")

    def c_expr(self, k, i, j) -> Expr:
        return self.c.get((k, i, j), Const(0.0))

    def replace(self, **changes) -> "FModel":
        from dataclasses import replace

        return replace(self, **changes)


# evaluation ------------------------------------------------------------------

def exprs_at(model: FModel, exprs, point, order) -> Jet:
    """Jets of a list of expressions, stacked."""
    point = np.asarray(point, dtype=float)
    space = get_space(model.dim, order)
    out = np.zeros((len(exprs), space.size))
    for k, ex in enumerate(exprs):
        if isinstance(ex, Const):
            out[k, 0] = ex.value
        else:
            out[k] = eval_expr_jet(ex, model.coords, point, order).coeffs
    return Jet(space, out)


@dataclass(frozen=True)
class ProductJet:
    point: tuple
    order: int
    c: Jet
    e: Jet

    @property
    def dim(self):
        return self.c.shape[0]


def structure_at(model: FModel, point, order) -> Jet:
    n = model.dim
    space = get_space(n, order)
    coeffs = np.zeros((n, n, n, space.size))
    point = np.asarray(point, dtype=float)
    for (k, i, j), ex in model.c.items():
        if isinstance(ex, Const):
            coeffs[k, i, j, 0] = ex.value
        else:
            coeffs[k, i, j] = eval_expr_jet(ex, model.coords, point, order).coeffs
    return Jet(space, coeffs)


def product_at(model: FModel, point=None, order: int = 1) -> ProductJet:
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    c = structure_at(model, point, order)
    e = exprs_at(model, model.e, point, order)
    return ProductJet(tuple(point), order, c, e)


def vector_field_at(model: FModel, Y, point, order) -> Jet:
    """Jet of a vector field given by name, expressions, a series field or a jet."""
    if isinstance(Y, Jet):
        return Y.truncate(order)
    if hasattr(Y, "jets_at"):
        return Y.jets_at(point, order)
    if isinstance(Y, str):
        return exprs_at(model, model.field(Y), point, order)
    comps = [_as_expr(x) for x in Y]
    if len(comps) != model.dim:
        raise ModelDimensionError(f"vector field has {len(comps)} components, expected {model.dim}")
    return exprs_at(model, comps, point, order)


def metric_exprs(model: FModel):
    if model.metric is None:
        raise ModelError(f"model {model.name!r} has no metric")
    return model.metric


# field algebra on jets ---------------------------------------------------------

def _common(*jets):
    order = min(j.order for j in jets)
    return [j.truncate(order) for j in jets]


def multiply(c: Jet, U: Jet, V: Jet) -> Jet:
    """(U o V)^k = c^k_{ij} U^i V^j, batched over leading axes of U and V."""
    c, U, V = _common(c, U, V)
    cu = jet_einsum("kij,...i->...kj", c, U)
    return jet_einsum("...kj,...j->...k", cu, V)


def bracket(U: Jet, V: Jet) -> Jet:
    """Lie bracket [U,V]^k = U^i d_i V^k - V^i d_i U^k (one order lower)."""
    U, V = _common(U, V)
    dV = V.derivatives()
    dU = U.derivatives()
    lo = dV.order
    return jet_einsum("...i,...ki->...k", U.truncate(lo), dV) - jet_einsum(
        "...i,...ki->...k", V.truncate(lo), dU
    )


def basis_fields(n, order, shape=()):
    """Constant coordinate fields d_a as jets of shape (n, n): row a is d_a."""
    return Jet.constant(np.eye(n), n, order)


def _P(c, X, Y, Z):
    # P_X(Y, Z) = [X, Y o Z] - [X, Y] o Z - Y o [X, Z]
    return bracket(X, multiply(c, Y, Z)) - multiply(c, bracket(X, Y), Z) - multiply(c, Y, bracket(X, Z))


def hertling_manin_defect(c: Jet) -> Jet:
    """HM(X,Y,Z,W) = P_{XoY}(Z,W) - X o P_Y(Z,W) - Y o P_X(Z,W) on coordinate fields.

    Returns jets of shape (n, n, n, n, n) indexed [a, b, c, d, k] for
    X, Y, Z, W = d_a, d_b, d_c, d_d.  Needs ``c`` of order >= 1; the result
    has order ``c.order - 1``.
    """
    n = c.shape[0]
    E = Jet.constant(np.eye(n), n, c.order)
    shp = (n, n, n, n, n)
    X = Jet(E.space, np.broadcast_to(E.coeffs[:, None, None, None], shp + (E.space.size,)))
    Y = Jet(E.space, np.broadcast_to(E.coeffs[None, :, None, None], shp + (E.space.size,)))
    Z = Jet(E.space, np.broadcast_to(E.coeffs[None, None, :, None], shp + (E.space.size,)))
    W = Jet(E.space, np.broadcast_to(E.coeffs[None, None, None, :], shp + (E.space.size,)))
    XY = multiply(c, X, Y)
    lhs = _P(c, XY, Z, W)
    rhs = multiply(c, X, _P(c, Y, Z, W)) + multiply(c, Y, _P(c, X, Z, W))
    return lhs - rhs


def check_algebra_axioms(model: FModel, point=None, order: int = 1, tol: float = 1e-10) -> Report:
    if order < 1:
        raise ValueError("the Hertling-Manin check needs order >= 1")
    pj = product_at(model, point, order)
    c, e = pj.c, pj.e
    c0 = c.values()
    e0 = e.values()
    n = model.dim
    comm = c0 - c0.transpose(0, 2, 1)
    # c^i_{sj} c^s_{km} - c^i_{sk} c^s_{jm}
    left = np.einsum("isj,skm->ijkm", c0, c0)
    assoc = left - left.transpose(0, 2, 1, 3)
    unit = np.einsum("kij,j->ki", c0, e0) - np.eye(n)
    hm = hertling_manin_defect(c).values()
    scale = max(1.0, max_abs(c0), max_abs(e0))
    return Report(
        "algebra_axioms",
        (
            ("commutativity", max_abs(comm)),
            ("associativity", max_abs(assoc)),
            ("unit", max_abs(unit)),
            ("hertling_manin", max_abs(hm)),
        ),
        tol * scale,
        point=pj.point,
        order=order,
        convention_notes=(PRODUCT_CONVENTION,),
    )


def multiplication_operator(c, X):
    """Matrix of C_X = X o . as A[k, j] = c^k_{jl} X^l (jets or arrays)."""
    if isinstance(c, Jet) or isinstance(X, Jet):
        return jet_einsum("kjl,l->kj", c, X)
    return np.einsum("kjl,l->kj", c, X)


def cyclic_frame(c0: np.ndarray, e0: np.ndarray, X0: np.ndarray) -> np.ndarray:
    """Columns e, X o e, X o X o e, ... at a point."""
    A = multiplication_operator(c0, X0)
    cols = [np.asarray(e0, dtype=float)]
    for _ in range(len(e0) - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def check_cyclic(model: FModel, X="X", point=None, tol: float = 1e-8) -> Report:
    """Cyclicity of ``X`` at a point.

    The single item is the reciprocal of the column-scaled frame
    determinant, so the verdict reads "cyclic" when that scaled determinant
    exceeds ``tol``.
    """
    point = model.base_point if point is None else np.asarray(point, dtype=float)
    pj = product_at(model, point, 0)
    Xv = vector_field_at(model, X, point, 0).values()
    F = cyclic_frame(pj.c.values(), pj.e.values(), Xv)
    det = float(np.linalg.det(F))
    norms = np.linalg.norm(F, axis=0)
    scaled = abs(det) / np.prod(norms) if np.all(norms > 0) else 0.0
    sv = np.linalg.svd(F, compute_uv=False)
    inverse = 1.0 / scaled if scaled > 0 else np.inf
    return Report(
        "cyclicity",
        (("inverse_scaled_det", inverse),),
        1.0 / tol,
        point=tuple(point),
        order=0,
        convention_notes=("frame columns: e, X o e, ..., X^(n-1) o e",),
        info={"det": det, "scaled_det": scaled, "min_singular_value": float(sv.min())},
    )


# David-Hertling block models ------------------------------------------------------

def dh_coordinates(block_sizes):
    return [f"u{i + 1}_{a + 1}" for a, m in enumerate(block_sizes) for i in range(m)]


def default_dh_field(block_sizes):
    """A polynomial field that is cyclic at the origin for the given blocks."""
    comps = []
    for a, m in enumerate(block_sizes):
        u1 = f"u1_{a + 1}"
        if m == 1:
            comps.append(f"{2 * a} + {u1}")
            continue
        u2 = f"u2_{a + 1}"
        comps.append(f"{2 * a} + {u1} + {u2}^2/2")
        comps.append(f"1 + {u1}*{u2}")
        comps.extend(f"u{i + 1}_{a + 1}" for i in range(2, m))
    return comps


def make_dh_model(block_sizes: Sequence[int], X_components=None, name=None, point=None) -> FModel:
    sizes = [int(m) for m in block_sizes]
    if not sizes or any(m < 1 for m in sizes):
        raise ModelDimensionError("block sizes must be positive")
    n = sum(sizes)
    coords = dh_coordinates(sizes)
    if X_components is None:
        X_components = default_dh_field(sizes)
    if len(X_components) != n:
        raise ModelDimensionError(f"X has {len(X_components)} components but blocks sum to {n}")
    c = {}
    e = []
    start = 0
    for m in sizes:
        for j in range(m):
            for k in range(m):
                if j + k < m:
                    c[(start + j + k, start + j, start + k)] = Const(1.0)
        e.extend([1.0] + [0.0] * (m - 1))
        start += m
    name = name or "dh-" + "-".join(str(m) for m in sizes)
    return FModel(name, coords, c, e, fields={"X": X_components}, flow="X", point=point)


def dh_cyclic_predicate(block_sizes, X0) -> bool:
    """Closed-form regular non-degeneracy test at a point for a block model."""
    X0 = np.asarray(X0, dtype=float)
    firsts, start = [], 0
    for m in block_sizes:
        firsts.append(X0[start])
        if m >= 2 and X0[start + 1] == 0:
            return False
        start += m
    return len(set(firsts)) == len(firsts)


# builtin examples ------------------------------------------------------------------

def _nonregular2d():
    return FModel(
        "nonregular2d",
        ("t", "s"),
        {(0, 0, 0): "1", (1, 0, 1): "1", (1, 1, 0): "1", (1, 1, 1): "s"},
        ("1", "0"),
        fields={"X": ("0", "1")},
        flow="X",
        point=(0.0, 0.0),
    )


def _twocomponent():
    return FModel(
        "twocomponent",
        ("r1", "r2"),
        {(0, 0, 0): "1", (1, 1, 1): "1"},
        ("1", "1"),
        fields={
            "X": ("1 - exp(-r2)", "1"),
            "w": ("r2 + r1*exp(-r2)", "1 + r2"),
        },
        flow="X",
        metric=(("exp(2*r2)", "0"), ("0", "1")),
        densities={"h1": "r2", "h2": "r1*exp(r2)"},
        data={
            "w_e": ModelData("e", exprs=(parse_expression("t + t*exp(-t)"), parse_expression("1 + t")), var="t"),
            "w_tsarev": ModelData("tsarev", exprs=(parse_expression("s"), parse_expression("1 + s")), var="s"),
        },
        point=(0.0, 0.0),
    )


def _onedim():
    return FModel("onedim", ("u",), {(0, 0, 0): "1"}, ("1",), fields={"X": ("u",)}, flow="X", point=(0.5,))


_BUILTINS = {
    "nonregular2d": _nonregular2d,
    "twocomponent": _twocomponent,
    "onedim": _onedim,
}


def builtin_example(name: str) -> FModel:
    if name in _BUILTINS:
        return _BUILTINS[name]()
    m = re.fullmatch(r"dh-(\d+(?:-\d+)*)", name)
    if m:
        sizes = [int(s) for s in m.group(1).split("-")]
        if all(s > 0 for s in sizes):
            return make_dh_model(sizes, name=name)
    raise ModelError(f"unknown example {name!r}; known: {', '.join(list_examples())}")


def list_examples():
    return sorted(_BUILTINS) + ["dh-<sizes> (e.g. dh-2, dh-2-1, dh-1-1-1)"]


def builtin_models():
    """The concrete builtin models used across the test suites."""
    return [builtin_example(n) for n in ("nonregular2d", "twocomponent", "onedim", "dh-2", "dh-2-1", "dh-3")]
