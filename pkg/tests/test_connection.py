import numpy as np
import pytest

from fman.algebra import (
    FModel, builtin_example, builtin_models, make_dh_model, multiply, product_at,
    vector_field_at,
)
from fman.connection import (
    ChristoffelJet, CounitChoice, CounitError, NonCyclicError, apply_MA, assemble_MA,
    build_natural_connection, check_connection_axioms, covariant_product_derivative,
)
from fman.expr import eval_float
from fman.jet import Jet, jet_einsum


def _floats(model, exprs, p):
    env = dict(zip(model.coords, p))
    return np.array([eval_float(ex, env) for ex in exprs])


def _A(model, p, X="X"):
    n = model.dim
    c = np.array([[[eval_float(model.c_expr(k, i, j), dict(zip(model.coords, p))) for j in range(n)] for i in range(n)] for k in range(n)])
    return np.einsum("kjl,l->kj", c, _floats(model, model.field(X), p))


def fd_residuals(model, p, h=1e-5):
    """nabla e and d_nabla(X o) from central differences of plain float evaluation."""
    p = np.asarray(p, dtype=float)
    n = model.dim
    G = build_natural_connection(model, "X", p, 0).values()
    dA = np.zeros((n, n, n))  # [k, i, j] = d_i A^k_j
    de = np.zeros((n, n))  # [k, i] = d_i e^k
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        dA[:, i, :] = (_A(model, p + step) - _A(model, p - step)) / (2 * h)
        de[:, i] = (_floats(model, model.e, p + step) - _floats(model, model.e, p - step)) / (2 * h)
    A = _A(model, p)
    e = _floats(model, model.e, p)
    nabla_e = de + np.einsum("kil,l->ki", G, e)
    N = dA + np.einsum("kil,lj->kij", G, A) - np.einsum("kl,lij->kij", A, G)
    return np.abs(nabla_e).max(), np.abs(N - N.transpose(0, 2, 1)).max()


def test_onedim_gamma_zero():
    g = build_natural_connection(builtin_example("onedim"), "X", None, 1)
    assert np.all(g.gamma.coeffs == 0)


def test_twocomponent_values():
    m = builtin_example("twocomponent")
    rng = np.random.default_rng(0)
    for p in rng.uniform(-1, 1, (20, 2)):
        G = build_natural_connection(m, "X", p, 1).values()
        # off-diagonal entries; diagonal ones follow from the row sums of nabla e = 0
        assert abs(G[0, 0, 1] - 1) < 1e-12 and abs(G[1, 0, 1]) < 1e-12
        assert abs(G[0, 0, 0] + 1) < 1e-12 and abs(G[0, 1, 1] + 1) < 1e-12
        assert abs(G[1, 0, 0]) < 1e-12 and abs(G[1, 1, 1]) < 1e-12
        assert np.allclose(G.sum(axis=2), 0, atol=1e-12)


@pytest.mark.parametrize("model", [m for m in builtin_models()], ids=lambda m: m.name)
def test_axioms_and_fd_oracle(model):
    rng = np.random.default_rng(1)
    for _ in range(3):
        p = model.base_point + rng.uniform(-0.2, 0.2, model.dim)
        g = build_natural_connection(model, "X", p, 2)
        rep = check_connection_axioms(g, model, "X", p, 1e-10)
        assert rep.verdict, rep.items
        ne, dA = fd_residuals(model, p)
        assert ne < 1e-8 and dA < 1e-7


def test_jet_derivatives_of_gamma_match_fd():
    m = builtin_example("nonregular2d")
    p = np.array([0.2, 0.3])
    g = build_natural_connection(m, "X", p, 1).gamma
    h = 1e-5
    for i in range(2):
        step = np.zeros(2)
        step[i] = h
        fd = (build_natural_connection(m, "X", p + step, 0).values() - build_natural_connection(m, "X", p - step, 0).values()) / (2 * h)
        assert np.allclose(g.partial(i).values(), fd, atol=1e-8)


def test_perturbation_is_detected():
    m = builtin_example("twocomponent")
    p = np.array([0.1, 0.2])
    g = build_natural_connection(m, "X", p, 1)
    coeffs = g.gamma.coeffs.copy()
    coeffs[0, 0, 1, 0] += 1e-3
    coeffs[0, 1, 0, 0] += 1e-3
    bad = ChristoffelJet(g.point, Jet(g.gamma.space, coeffs))
    items = dict(check_connection_axioms(bad, m, "X", p).items)
    assert items["d_nabla_XA"] >= 1e-4


def test_nonregular_at_origin():
    m = builtin_example("nonregular2d")
    g = build_natural_connection(m, "X", (0.0, 0.0), 1)
    rep = check_connection_axioms(g, m, "X", (0.0, 0.0), 1e-10)
    assert rep.verdict, rep.items


def test_counit_and_aux_independence():
    rng = np.random.default_rng(2)
    for model in builtin_models():
        n = model.dim
        p = model.base_point + rng.uniform(-0.2, 0.2, n)
        ref = build_natural_connection(model, "X", p, 2).gamma.coeffs
        e0 = _floats(model, model.e, p)
        theta = rng.normal(size=n)
        theta = theta / (theta @ e0) if abs(theta @ e0) > 0.1 else e0 / (e0 @ e0)
        other = build_natural_connection(model, "X", p, 2, theta=CounitChoice(tuple(theta))).gamma.coeffs
        assert np.abs(other - ref).max() <= 1e-10
        aux = rng.normal(size=(n, n, n))
        other = build_natural_connection(model, "X", p, 2, aux=aux).gamma.coeffs
        assert np.abs(other - ref).max() <= 1e-10
    with pytest.raises(CounitError):
        build_natural_connection(builtin_example("twocomponent"), theta=CounitChoice((1.0, 1.0)))


def test_tsarev_closed_form_on_semisimple_model():
    fields = ("exp(r2) + r3", "r1*r3 + 2", "sin(r1 + r2) - 3")
    m = FModel("ss3", ("r1", "r2", "r3"), {(k, k, k): "1" for k in range(3)}, ("1", "1", "1"), fields={"X": fields})
    rng = np.random.default_rng(3)
    h = 1e-5
    for p in rng.uniform(-0.5, 0.5, (100, 3)):
        G = build_natural_connection(m, "X", p, 0).values()
        v = _floats(m, m.field("X"), p)
        for j in range(3):
            step = np.zeros(3)
            step[j] = h
            dv = (_floats(m, m.field("X"), p + step) - _floats(m, m.field("X"), p - step)) / (2 * h)
            for i in range(3):
                if i != j:
                    assert abs(G[i, i, j] - dv[i] / (v[j] - v[i])) < 1e-8 * max(1, abs(G[i, i, j]))


def test_ma_operator_brute_force():
    rng = np.random.default_rng(4)
    e = np.array([1.0, 1.0])
    f = np.array([1.0, -1.0])  # f(e) = 0, so f (x) f spans the constrained forms
    for _ in range(10):
        A = rng.normal(size=(2, 2))
        cols = []
        for k in range(2):
            S = np.zeros((2, 2, 2))
            S[k] = np.outer(f, f)
            cols.append(apply_MA(Jet.constant(A, 2, 0), Jet.constant(S, 2, 0)).values()[:, 0, 1])
        brute = np.column_stack(cols)
        assert np.linalg.matrix_rank(brute) == 2
        op = assemble_MA(Jet.constant(A, 2, 0), Jet.constant(e, 2, 0))
        # the library basis is the symmetrized outer product 2 f (x) f
        assert np.allclose(op.full_matrix(), 2 * brute, atol=1e-14)
    with pytest.raises(NonCyclicError):
        assemble_MA(Jet.constant(3 * np.eye(2), 2, 0), Jet.constant(e, 2, 0))
    one = assemble_MA(Jet.constant(np.eye(1), 1, 0), Jet.constant(np.ones(1), 1, 0))
    assert one.size == 0 and one.full_matrix().shape == (0, 0)


def test_non_cyclic_field_rejected():
    m = make_dh_model([2], ["1", "0"])
    with pytest.raises(NonCyclicError):
        build_natural_connection(m, "X", (0.0, 0.0), 1)


@pytest.mark.parametrize("sizes", [[2, 1], [3], [1, 1, 1]])
def test_propagation_of_symmetry_to_powers(sizes):
    m = make_dh_model(sizes)
    p = np.linspace(0.1, 0.3, m.dim)
    g = build_natural_connection(m, "X", p, 1).gamma
    pj = product_at(m, p, 2)
    X = vector_field_at(m, "X", p, 2)
    W = pj.e
    for _ in range(m.dim):
        T = covariant_product_derivative(pj.c, g)
        TW = jet_einsum("kijl,l->kij", T, W.truncate(1)).values()
        assert np.abs(TW - TW.transpose(0, 2, 1)).max() < 1e-10
        W = multiply(pj.c, X, W)
