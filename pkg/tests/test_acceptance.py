"""The twelve acceptance criteria, each timed against its runtime budget.

Run under pytest for a summary section, or directly with
``python tests/test_acceptance.py`` for one PASS/FAIL line per criterion.
"""

import functools
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE_LINES, density_family, novikov_instance, random_algebra_model, random_dh_model
from fman.algebra import builtin_example, builtin_models, check_algebra_axioms, check_cyclic, product_at
from fman.connection import CounitChoice, build_natural_connection, check_connection_axioms
from fman.curvature import check_3rc_model, obstruction_tensors
from fman.expr import eval_float
from fman.hodograph import GridSpec, HodographProblem, hodograph_grid, verify_hodograph_solution
from fman.jet import Jet, get_space
from fman.metric import (
    DensitySet, check_dn, check_invariance, check_riemannian_f, connection_from_metric, conservation_check,
    self_adjoint_metric,
)
from fman.symmetry import (
    CauchyData, TsarevData, adapt_chart, check_commuting_flows, solve_symmetry, transform_e_to_tsarev,
    transform_tsarev_to_e, tsarev_coefficients,
)

K = 8


def criterion(number, title, budget):
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            err = None
            try:
                fn()
            except AssertionError as exc:
                err = exc
            elapsed = time.perf_counter() - t0
            ok = err is None and elapsed < budget
            note = "" if err is None else f"  ({err})"
            if err is None and not ok:
                note = "  (over budget)"
            line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {elapsed:6.2f}s / {budget:g}s  {title}{note}"
            ACCEPTANCE_LINES.append(line)
            print(line)
            if err is not None:
                raise err
            assert elapsed < budget, f"{title}: {elapsed:.2f}s exceeds {budget}s"

        run.number = number
        return run

    return wrap


def _random_points(rng, model, count, radius):
    return model.base_point + rng.uniform(-radius, radius, (count, model.dim))


def _exp_series(a, order):
    return [a**m / math.factorial(m) for m in range(order + 1)]


def _w_cauchy():
    # Y0(t) = (t + t e^{-t}, 1 + t)
    em = _exp_series(-1.0, K)
    first = [0.0] + [(1.0 if m == 1 else 0.0) + em[m - 1] for m in range(1, K + 1)]
    return CauchyData((first, [1.0, 1.0] + [0.0] * (K - 1)))


@criterion(1, "Tsarev coefficients a12 = 1, a21 = 0 on a 10x10 grid", 1.0)
def test_tsarev_coefficients_grid():
    m = builtin_example("twocomponent")
    worst = 0.0
    for r1 in np.linspace(-1, 1, 10):
        for r2 in np.linspace(-1, 1, 10):
            a = tsarev_coefficients(m, "X", (r1, r2), 0).values()
            worst = max(worst, abs(a[0, 1] - 1), abs(a[1, 0]))
    assert worst <= 1e-12, worst


@criterion(2, "natural connection values, axioms and independence", 5.0)
def test_natural_connection():
    m = builtin_example("twocomponent")
    rng = np.random.default_rng(100)
    e0 = np.ones(2)
    for p in rng.uniform(-1, 1, (100, 2)):
        g = build_natural_connection(m, "X", p, 1)
        G = g.values()
        assert abs(G[0, 0, 1] - 1) <= 1e-12 and abs(G[1, 0, 1]) <= 1e-12, G
        rep = check_connection_axioms(g, m, "X", p, 1e-10)
        assert rep.verdict, rep.items
    for p in rng.uniform(-1, 1, (10, 2)):
        ref = build_natural_connection(m, "X", p, 2).gamma.coeffs
        theta = rng.normal(size=2)
        theta = theta / (theta @ e0)
        other = build_natural_connection(m, "X", p, 2, theta=CounitChoice(tuple(theta))).gamma.coeffs
        assert np.abs(other - ref).max() <= 1e-10
        other = build_natural_connection(m, "X", p, 2, aux=rng.normal(size=(2, 2, 2))).gamma.coeffs
        assert np.abs(other - ref).max() <= 1e-10


@criterion(3, "non-regular model: cyclic at s = 0 with a valid connection", 1.0)
def test_nonregular():
    m = builtin_example("nonregular2d")
    p = (0.0, 0.0)
    assert check_cyclic(m, "X", p).info["det"] == 1.0
    assert check_algebra_axioms(m, p, 2, 1e-12).verdict
    rep = check_connection_axioms(build_natural_connection(m, "X", p, 1), m, "X", p, 1e-10)
    assert rep.verdict, rep.items


def _coupled(rep, tol):
    zin = max(rep["zinside"], rep["zinside_invariant"])
    out = max(rep["outside"], rep["outside_invariant"])
    return (zin > tol or out <= 10 * tol) and (out > tol or zin <= 10 * tol)


@criterion(4, "cyclic curvature condition and coupling of its two forms", 10.0)
def test_three_rc():
    m = builtin_example("twocomponent")
    rng = np.random.default_rng(101)
    for p in rng.uniform(-1, 1, (100, 2)):
        rep = check_3rc_model(m, "X", p, 1e-10)
        assert rep.verdict, rep.items
    tol = 1e-10
    verdicts = []
    for model in builtin_models() + [random_dh_model(rng) for _ in range(50)]:
        p = model.base_point + rng.uniform(-0.05, 0.05, model.dim)
        rep = check_3rc_model(model, "X", p, tol)
        assert _coupled(rep, tol), (model.name, rep.items)
        verdicts.append(rep.verdict)
    assert any(verdicts) and not all(verdicts)


@criterion(5, "obstruction tensors on every builtin model", 5.0)
def test_obstructions():
    rng = np.random.default_rng(102)
    for model in builtin_models():
        am = adapt_chart(model)
        for p in _random_points(rng, am, 3, 0.2):
            res = obstruction_tensors(am, "X", p).residuals()
            assert res["C"] <= 1e-12 and res["A"] <= 1e-10 and res["B_vs_curvature"] <= 1e-10, (model.name, res)


@criterion(6, "order-8 symmetry series from unit-curve data", 2.0)
def test_symmetry_series():
    m = builtin_example("twocomponent")
    Y = solve_symmetry(m, "X", _w_cauchy(), K)
    # Taylor coefficients of (r2 + r1 e^{-r2}, 1 + r2) at the origin
    space = get_space(2, K)
    want = np.zeros((2, space.size))
    for q, (a1, a2) in enumerate(space.alphas):
        if a1 == 1:
            want[0, q] = (-1) ** a2 / math.factorial(a2)
        if (a1, a2) == (0, 1):
            want[0, q] = want[1, q] = 1.0
        if (a1, a2) == (0, 0):
            want[1, q] = 1.0
    err = np.abs(Y.jet.coeffs - want).max()
    assert err <= 1e-11, err


@criterion(7, "unit-curve and axis data round trip", 5.0)
def test_round_trip():
    m = builtin_example("twocomponent")
    phi = TsarevData(([0.0, 1.0] + [0.0] * (K - 1), [1.0, 1.0] + [0.0] * (K - 1)))
    Y0 = transform_tsarev_to_e(m, "X", phi, K)
    assert np.abs(Y0.array() - _w_cauchy().array()).max() <= 1e-10
    assert np.abs(transform_e_to_tsarev(m, "X", Y0, K).array() - phi.array()).max() <= 1e-10
    rng = np.random.default_rng(103)
    scale = [math.factorial(k) for k in range(K + 1)]
    for _ in range(20):
        data = CauchyData(tuple(rng.normal(size=K + 1) / scale for _ in range(2)))
        back = transform_tsarev_to_e(m, "X", transform_e_to_tsarev(m, "X", data, K), K)
        assert np.abs(back.array() - data.array()).max() <= 1e-10


@criterion(8, "hodograph grid against the closed form, second-order PDE residual", 10.0)
def test_hodograph():
    prob = HodographProblem(builtin_example("twocomponent"), "X", "w", guess=(1.0, 0.0))
    grid = hodograph_grid(prob, GridSpec(0.5, 1.5, 21), GridSpec(-0.2, 0.2, 21))
    assert grid.converged.all() and grid.residual.max() <= 1e-12
    x, t = np.meshgrid(grid.xs, grid.ts, indexing="ij")
    u2 = x + t - 1
    want = np.stack([np.exp(u2) - t, u2], axis=-1)
    assert np.abs(grid.u - want).max() <= 1e-10
    rep = verify_hodograph_solution(prob.model, "X", grid, 1e-3, problem=prob, halvings=2)
    assert min(rep.info["orders"]) >= 1.9, rep.info["orders"]


@criterion(9, "partial invariance implies full invariance on 100 cyclic models", 10.0)
def test_self_adjoint_suite():
    rng = np.random.default_rng(104)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        a = random_algebra_model(rng, n)
        pj = product_at(a, None, 0)
        A = np.einsum("kjl,l->kj", pj.c.values(), [eval_float(x, {}) for x in a.field("X")])
        g = self_adjoint_metric(A, pj.e.values(), rng.normal(size=n))
        rep = check_invariance(Jet.constant(g, n, 0), a, "X", tol=1e-9)
        assert rep.info["cyclic"] and rep["partial"] <= 1e-9 and rep["full"] <= 1e-9, rep.items


@criterion(10, "metric connection equals the natural one when the metric conditions hold", 20.0)
def test_novikov_chain():
    rng = np.random.default_rng(105)
    seen = {True: 0, False: 0}
    for _ in range(40):
        m, _ = novikov_instance(rng)
        p = m.base_point
        ok = (check_cyclic(m, "X", p).verdict and check_dn(None, m, "X", p, 1e-9).verdict
              and check_riemannian_f(None, m, p, 1e-9).verdict)
        seen[ok] += 1
        if ok:
            G = connection_from_metric(None, m, p, 1).values()
            assert np.abs(G - build_natural_connection(m, "X", p, 1).values()).max() <= 1e-9
            assert check_3rc_model(m, "X", p, 1e-9).verdict
    assert seen[True] >= 20 and seen[False], seen


@criterion(11, "conserved densities: Hessian invariance, curvature pairing, 3RC verdict", 10.0)
def test_conservation():
    m = builtin_example("twocomponent")
    rng = np.random.default_rng(106)
    sets = [None] + [DensitySet.parse({"a": density_family(rng), "b": density_family(rng)}) for _ in range(15)]
    for dens in sets:
        p = rng.uniform(-1, 1, 2)
        rep = conservation_check(m, "X", densities=dens, point=p, tol=1e-9)
        assert rep["closedness"] <= 1e-9, rep.items
        assert rep["hessian_invariance"] <= 1e-9 and rep["curvature_pairing"] <= 1e-9, rep.items
        if rep.info["independent"]:
            assert rep.info["three_rc_verdict"] == check_3rc_model(m, "X", p, 1e-9).verdict


@criterion(12, "commuting frame of symmetries from constant data", 10.0)
def test_commuting_frame():
    rng = np.random.default_rng(107)
    for model in builtin_models():
        if not check_3rc_model(model, "X", model.base_point, 1e-10).verdict:
            continue
        n = model.dim
        frame = [solve_symmetry(model, "X", np.eye(n)[a][:, None] * np.eye(1, 7), 6) for a in range(n)]
        for p in _random_points(rng, model, 10, 0.1):
            F = np.column_stack([Y(p) for Y in frame])
            assert abs(np.linalg.det(F)) > 0.5, (model.name, p)
            for a in range(n):
                for b in range(a + 1, n):
                    assert check_commuting_flows(model, frame[a], frame[b], p, 1e-9).verdict, (model.name, a, b)


if __name__ == "__main__":
    tests = sorted((v for v in list(globals().values()) if callable(v) and getattr(v, "__name__", "").startswith("test_")), key=lambda f: f.number)
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
