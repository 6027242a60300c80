import math

import mpmath
import numpy as np
import pytest

from fman.jet import Jet, get_space


def random_jet(rng, nvars, order, shape=(), const=None, scale=1.0):
    space = get_space(nvars, order)
    coeffs = scale * rng.standard_normal(tuple(shape) + (space.size,))
    if const is not None:
        coeffs[..., 0] = const
    return Jet(space, coeffs)


def taylor_oracle(f, point, nvars, order, dps=30):
    """Taylor coefficients of f at point from mpmath high-precision differentiation.

    f takes mpmath numbers and returns an mpmath number.
    """
    space = get_space(nvars, order)
    out = np.zeros(space.size)
    with mpmath.workdps(dps):
        pt = [mpmath.mpf(p) for p in point]
        for q, alpha in enumerate(space.alphas):
            d = mpmath.diff(lambda *x: f(*x), pt, alpha)
            out[q] = float(d) / math.prod(math.factorial(a) for a in alpha)
    return out


def jet_poly(jet: Jet):
    """Callable evaluating the truncated polynomial of a scalar jet at a displacement."""
    space = jet.space
    coeffs = jet.coeffs

    def f(*x):
        total = 0
        for q, alpha in enumerate(space.alphas):
            term = coeffs[q]
            for xi, a in zip(x, alpha):
                term = term * xi**a
            total = total + term
        return total

    return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


DH_LAYOUTS = ([2], [3], [1, 1], [2, 1], [1, 1, 1], [2, 2], [3, 1], [2, 1, 1])


def random_dh_model(rng, layouts=DH_LAYOUTS):
    """Block product with a random quadratic flow that is cyclic at the origin."""
    from fman.algebra import dh_coordinates, make_dh_model

    sizes = layouts[rng.integers(len(layouts))]
    coords = dh_coordinates(sizes)
    firsts = rng.permutation(len(sizes)) * 1.5 + rng.uniform(-0.3, 0.3)
    comps = []
    for a, m in enumerate(sizes):
        for i in range(m):
            if i == 0:
                base = float(firsts[a])
            elif i == 1:
                base = float(rng.choice([-1, 1]) * rng.uniform(0.5, 1.5))
            else:
                base = float(rng.normal())
            terms = [repr(base)]
            for v in rng.choice(coords, size=2):
                terms.append(f"{float(rng.normal()) * 0.5!r}*{v}")
            u, w = rng.choice(coords, size=2)
            terms.append(f"{float(rng.normal()) * 0.3!r}*{u}*{w}")
            comps.append(" + ".join(terms))
    return make_dh_model(sizes, comps, name="dh-random")


def _poly(rng, var, degree=2, scale=0.3):
    return " + ".join(f"{float(rng.normal()) * scale!r}*{var}^{d}" for d in range(1, degree + 1))


def random_algebra_model(rng, n):
    """Constant-coefficient product: a random block algebra in a random linear basis,
    with a constant random flow.  Cyclic for generic draws."""
    from fman.algebra import FModel, make_dh_model, product_at

    sizes, left = [], n
    while left:
        m = int(rng.integers(1, left + 1))
        sizes.append(m)
        left -= m
    base = product_at(make_dh_model(sizes), np.zeros(n), 0)
    c0, e0 = base.c.values(), base.e.values()
    while True:
        P = rng.normal(size=(n, n))
        if np.linalg.cond(P) < 20:
            break
    Pinv = np.linalg.inv(P)
    c = np.einsum("ck,kij,ia,jb->cab", Pinv, c0, P, P)
    e = Pinv @ e0
    while True:
        X = rng.normal(size=n)
        A = np.einsum("kjl,l->kj", c, X)
        F = np.column_stack([np.linalg.matrix_power(A, k) @ e for k in range(n)])
        if np.linalg.cond(F) < 1e3:
            break
    coords = [f"x{k + 1}" for k in range(n)]
    table = {(k, i, j): float(c[k, i, j]) for k in range(n) for i in range(n) for j in range(n)}
    return FModel("random-algebra", coords, table, tuple(float(v) for v in e), fields={"X": tuple(float(v) for v in X)})


def novikov_instance(rng):
    """Diagonal model with a metric built so the Dubrovin-Novikov conditions hold,
    or (every fourth draw) a deliberately broken metric."""
    from fman.algebra import FModel

    if rng.random() < 0.5:
        lam = float(rng.uniform(0.3, 1.5))
        alpha = float(rng.uniform(1.5, 3.0))
        psi = f"({float(rng.uniform(-0.3, 0.3))!r} + {_poly(rng, 'r1')})"
        X = (f"{psi}*exp(-{lam!r}*r2) + {alpha!r}*(1 - exp(-{lam!r}*r2))", repr(alpha))
        g11 = f"exp(2*{lam!r}*r2 + {_poly(rng, 'r1')})"
        g22 = f"exp({_poly(rng, 'r2')})"
        metric = ((g11, "0"), ("0", g22))
        coords = ("r1", "r2")
    else:
        coords = ("r1", "r2", "r3")
        X = tuple(f"{2.0 * k + float(rng.uniform(-0.3, 0.3))!r} + {_poly(rng, f'r{k + 1}')}" for k in range(3))
        metric = tuple(tuple(f"exp({_poly(rng, f'r{k + 1}')})" if k == j else "0" for j in range(3)) for k in range(3))
    n = len(coords)
    broken = rng.random() < 0.25
    if broken:
        metric = tuple(tuple(f"({g})*(1 + 0.3*r1*r2)" if i == j == 0 else g for j, g in enumerate(row)) for i, row in enumerate(metric))
    model = FModel("novikov", coords, {(k, k, k): "1" for k in range(n)}, ("1",) * n, fields={"X": X},
                   metric=metric, point=tuple(float(v) for v in rng.uniform(-0.3, 0.3, n)))
    return model, broken


def density_family(rng):
    """h = F(r1) e^{r2} + G(r2) with random F, G."""
    F = f"({float(rng.normal())!r} + {_poly(rng, 'r1', 3)})"
    G = f"({_poly(rng, 'r2', 3)})"
    return f"{F}*exp(r2) + {G}"


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
