"""Generalized hodograph method: solve x e + t X(u) = Y(u) for u and check
that the resulting u(x, t) solves u_t = X o u_x."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import FModel, exprs_at, product_at, vector_field_at
from .report import Report, max_abs

NEWTON_TOL = 1e-12


class HodographError(ValueError):
    pass


class SingularJacobianError(HodographError):
    pass


class NewtonConvergenceError(HodographError):
    pass


@dataclass(frozen=True)
class HodographProblem:
    model: FModel
    X: object = "X"
    Y: object = "w"
    guess: tuple | None = None  # default: the model's base point
    newton_tol: float = NEWTON_TOL
    max_iter: int = 50
    max_halvings: int = 20

    def start(self):
        g = self.model.base_point if self.guess is None else self.guess
        return np.array(g, dtype=float)

    def residual(self, u, x, t):
        """(G(u), dG/du, scale) with G = Y - t X - x e."""
        m = self.model
        Y = vector_field_at(m, self.Y, u, 1)
        X = vector_field_at(m, self.X, u, 1)
        e = exprs_at(m, m.e, u, 1)
        G = Y - t * X - x * e
        scale = max_abs(Y.values()) + abs(t) * max_abs(X.values()) + abs(x) * max_abs(e.values())
        return G.values(), G.gradient(), max(scale, 1.0)


def _jacobian_singular(J):
    s = np.linalg.svd(J, compute_uv=False)
    return s[-1] <= 1e-13 * max(s[0], 1.0)


def hodograph_solve(problem: HodographProblem, x: float, t: float, guess=None):
    """Damped Newton for Y(u) - t X(u) - x e(u) = 0.

    Returns (u, residual, iterations).  The residual is scaled by
    |Y| + |t| |X| + |x| |e| (floored at 1).
    """
    u = problem.start() if guess is None else np.array(guess, dtype=float)
    G, J, scale = problem.residual(u, x, t)
    res = max_abs(G) / scale
    for it in range(problem.max_iter + 1):
        if res <= problem.newton_tol:
            return u, res, it
        if it == problem.max_iter:
            break
        if _jacobian_singular(J):
            raise SingularJacobianError(f"singular Jacobian of Y - tX at u = {tuple(u)} (x={x}, t={t})")
        step = np.linalg.solve(J, -G)
        lam = 1.0
        for _ in range(problem.max_halvings + 1):
            trial = u + lam * step
            try:
                G1, J1, s1 = problem.residual(trial, x, t)
                r1 = max_abs(G1) / s1
            except (ValueError, ArithmeticError):
                r1 = np.inf
            if np.isfinite(r1) and r1 < res:
                break
            lam *= 0.5
        else:
            raise NewtonConvergenceError(f"line search failed at x={x}, t={t} (residual {res:.3g})")
        u, G, J, scale, res = trial, G1, J1, s1, r1
    raise NewtonConvergenceError(f"no convergence in {problem.max_iter} iterations at x={x}, t={t} (residual {res:.3g})")


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    count: int

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        try:
            lo, hi, count = text.split(":")
            return cls(float(lo), float(hi), int(count))
        except ValueError:
            raise ValueError(f"grid spec must be lo:hi:count, got {text!r}") from None

    def values(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("empty grid")
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)

    def refined(self, factor=2) -> "GridSpec":
        return GridSpec(self.lo, self.hi, (self.count - 1) * factor + 1)


@dataclass
class GridSolution:
    xs: np.ndarray
    ts: np.ndarray
    u: np.ndarray  # (len(xs), len(ts), n)
    status: np.ndarray  # (len(xs), len(ts)) of str
    residual: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> np.ndarray:
        return self.status == "converged"

    def records(self):
        """One dict per node, x-major."""
        out = []
        for a, x in enumerate(self.xs):
            for b, t in enumerate(self.ts):
                out.append({
                    "x": float(x),
                    "t": float(t),
                    "u": [float(v) for v in self.u[a, b]],
                    "status": str(self.status[a, b]),
                    "residual": float(self.residual[a, b]),
                })
        return out


def _solve_node(problem, x, t, guess):
    try:
        u, res, _ = hodograph_solve(problem, x, t, guess)
        return u, res, "converged"
    except SingularJacobianError:
        return None, np.inf, "singular"
    except NewtonConvergenceError:
        return None, np.inf, "diverged"
    except (ValueError, ArithmeticError):
        return None, np.inf, "error"


def _threads():
    try:
        return max(1, int(os.environ.get("FMAN_THREADS", "1")))
    except ValueError:
        return 1


def hodograph_grid(problem: HodographProblem, xspec: GridSpec, tspec: GridSpec, sweep: str = "row",
                   parallel: bool = False) -> GridSolution:
    """Solve on a rectangular (x, t) grid.

    ``sweep="row"`` walks t fastest, ``"column"`` walks x fastest; each node
    starts from the last converged neighbour.  ``parallel=True`` cold-starts
    every node from the problem's guess and uses up to FMAN_THREADS threads.
    """
    xs, ts = xspec.values(), tspec.values()
    n = problem.model.dim
    u = np.full((len(xs), len(ts), n), np.nan)
    status = np.full((len(xs), len(ts)), "pending", dtype=object)
    resid = np.full((len(xs), len(ts)), np.inf)
    nodes = [(a, b) for a in range(len(xs)) for b in range(len(ts))]
    if sweep == "column":
        nodes = [(a, b) for b in range(len(ts)) for a in range(len(xs))]
    elif sweep != "row":
        raise ValueError(f"unknown sweep {sweep!r}")

    if parallel:
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            results = list(pool.map(lambda ab: _solve_node(problem, xs[ab[0]], ts[ab[1]], None), nodes))
        for (a, b), (ua, r, s) in zip(nodes, results):
            status[a, b], resid[a, b] = s, r
            if ua is not None:
                u[a, b] = ua
    else:
        guess = problem.start()
        line_start = guess
        for k, (a, b) in enumerate(nodes):
            first = (b == 0) if sweep == "row" else (a == 0)
            if first and k:
                guess = line_start
            ua, r, s = _solve_node(problem, xs[a], ts[b], guess)
            status[a, b], resid[a, b] = s, r
            if ua is not None:
                u[a, b] = ua
                guess = ua
                if first:
                    line_start = ua
    return GridSolution(xs, ts, u, status.astype(str), resid, {"sweep": "parallel" if parallel else sweep})


def _pde_defect(model, X, u0, ux, ut):
    pj = product_at(model, u0, 0)
    Xv = vector_field_at(model, X, u0, 0).values()
    return max_abs(ut - np.einsum("kij,i,j->k", pj.c.values(), Xv, ux))


def pde_residual(model: FModel, X, xs, ts, u) -> np.ndarray:
    """|u_t - X(u) o u_x| at interior nodes by central differences; NaN elsewhere."""
    hx = xs[1] - xs[0]
    ht = ts[1] - ts[0]
    out = np.full(u.shape[:2], np.nan)
    for a in range(1, len(xs) - 1):
        for b in range(1, len(ts) - 1):
            ux = (u[a + 1, b] - u[a - 1, b]) / (2 * hx)
            ut = (u[a, b + 1] - u[a, b - 1]) / (2 * ht)
            if np.all(np.isfinite(ux)) and np.all(np.isfinite(ut)) and np.all(np.isfinite(u[a, b])):
                out[a, b] = _pde_defect(model, X, u[a, b], ux, ut)
    return out


def _stencil_residual(problem, X, x, t, u0, hx, ht):
    """Residual at (x, t) with neighbours re-solved at steps hx, ht."""
    nb = []
    for dx, dt in ((hx, 0.0), (-hx, 0.0), (0.0, ht), (0.0, -ht)):
        v, _, _ = hodograph_solve(problem, x + dx, t + dt, u0)
        nb.append(v)
    ux = (nb[0] - nb[1]) / (2 * hx)
    ut = (nb[2] - nb[3]) / (2 * ht)
    return _pde_defect(problem.model, X, u0, ux, ut)


def verify_hodograph_solution(model: FModel, X, grid: GridSolution, tol: float = 1e-3,
                              problem: HodographProblem | None = None, halvings: int = 0) -> Report:
    """Central-difference check of u_t = X o u_x at the interior nodes.

    With ``problem`` and ``halvings > 0`` the stencil neighbours of every
    interior node are re-solved at h/2, h/4, ... and the observed
    convergence orders (log2 of successive max-residual ratios) go into
    ``info``.  The reported residual is the one on the finest level.
    """
    conv = grid.converged
    if len(grid.xs) < 3 or len(grid.ts) < 3 or conv[1:-1, 1:-1].sum() < 9:
        raise HodographError("need at least 3x3 converged interior nodes")
    if halvings and problem is None:
        raise ValueError("refinement needs the HodographProblem")
    u = np.where(conv[..., None], grid.u, np.nan)
    levels = [pde_residual(model, X, grid.xs, grid.ts, u)[1:-1, 1:-1]]
    hx = grid.xs[1] - grid.xs[0]
    ht = grid.ts[1] - grid.ts[0]
    for level in range(1, halvings + 1):
        f = 2.0 ** -level
        r = np.full(levels[0].shape, np.nan)
        for a in range(1, len(grid.xs) - 1):
            for b in range(1, len(grid.ts) - 1):
                if not np.isfinite(levels[0][a - 1, b - 1]):
                    continue
                try:
                    r[a - 1, b - 1] = _stencil_residual(problem, X, grid.xs[a], grid.ts[b], grid.u[a, b], f * hx, f * ht)
                except HodographError:
                    pass
        levels.append(r)
    maxes = [float(np.nanmax(r)) for r in levels]
    orders = [float(np.log2(a / b)) if b > 0 else float("inf") for a, b in zip(maxes, maxes[1:])]
    return Report(
        "hodograph_pde",
        (("pde_residual", maxes[-1]),),
        tol,
        convention_notes=("u_t - c^k_{ij} X^i u_x^j by central differences at interior nodes",),
        info={
            "h": [float(hx * 2.0 ** -k) for k in range(len(levels))],
            "max_residual_per_level": maxes,
            "orders": orders,
            "algebraic_residual": float(np.max(grid.residual[conv])) if conv.any() else float("inf"),
            "converged_nodes": int(conv.sum()),
            "nodes": int(conv.size),
        },
    )


def check_problem(problem: HodographProblem, tol: float = 1e-8):
    """Warn if Y does not pass the symmetry check at the starting point."""
    from .symmetry import check_symmetry_equation

    rep = check_symmetry_equation(problem.model, problem.X, problem.Y, problem.start(), tol)
    if not rep.verdict:
        warnings.warn(f"Y fails the symmetry equation at the guess (residual {rep.max_residual:.3g})", stacklevel=2)
    return rep
