"""Truncated multivariate Taylor jets.

A jet stores the Taylor coefficients of a (possibly tensor-valued) function
at a base point up to a fixed total degree.  Coefficients live on the last
axis of a dense array, ordered by total degree and, within one degree,
lexicographically with the first variable varying slowest.  The layout of
a lower-order space is a prefix of the higher-order one, so truncation is
plain slicing.
"""

from __future__ import annotations

import math
import string
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np


class JetError(ValueError):
    """Incompatible jets or an invalid jet operation."""


class JetDomainError(JetError):
    """An analytic function or division was applied outside its domain."""


class SingularJetMatrixError(JetError):
    """The constant part of a jet-valued matrix is singular."""


def _multi_indices(nvars, order):
    out = []
    for deg in range(order + 1):
        block = []
        for combo in combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for v in combo:
                alpha[v] += 1
            block.append(tuple(alpha))
        block.sort(reverse=True)
        out.extend(block)
    return out


class JetSpace:
    """Index tables for jets in ``nvars`` variables truncated at ``order``."""

    def __init__(self, nvars: int, order: int):
        if nvars < 1:
            raise JetError("a jet needs at least one variable")
        if order < 0:
            raise JetError("jet order must be nonnegative")
        self.nvars = nvars
        self.order = order
        self.alphas = _multi_indices(nvars, order)
        self.size = len(self.alphas)
        self.index = {a: k for k, a in enumerate(self.alphas)}
        self.degrees = np.array([sum(a) for a in self.alphas], dtype=int)
        self.alpha_array = np.array(self.alphas, dtype=int).reshape(self.size, nvars)
        self._mul = None
        self._partials = {}

    def __repr__(self):
        return f"JetSpace(nvars={self.nvars}, order={self.order})"

    @property
    def mul_tables(self):
        """Pair lists (I, J) sorted by the target index, plus segment starts."""
        if self._mul is None:
            left, right, target = [], [], []
            for i, a in enumerate(self.alphas):
                da = self.degrees[i]
                for j, b in enumerate(self.alphas):
                    if da + self.degrees[j] > self.order:
                        continue
                    left.append(i)
                    right.append(j)
                    target.append(self.index[tuple(x + y for x, y in zip(a, b))])
            target = np.array(target)
            perm = np.argsort(target, kind="stable")
            target = target[perm]
            starts = np.searchsorted(target, np.arange(self.size))
            self._mul = (np.array(left)[perm], np.array(right)[perm], starts)
        return self._mul

    def partial_table(self, var):
        """Source indices and factors for the derivative in ``var``."""
        if var not in self._partials:
            lower = get_space(self.nvars, self.order - 1)
            src = np.empty(lower.size, dtype=int)
            fac = np.empty(lower.size)
            for k, a in enumerate(lower.alphas):
                b = list(a)
                b[var] += 1
                src[k] = self.index[tuple(b)]
                fac[k] = b[var]
            self._partials[var] = (src, fac)
        return self._partials[var]


@lru_cache(maxsize=None)
def get_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


def _coeff_array(x):
    return np.asarray(x, dtype=float)


class Jet:
    """A jet-valued array.  ``coeffs`` has shape ``shape + (space.size,)``."""

    __array_priority__ = 1000

    def __init__(self, space: JetSpace, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[-1] != space.size:
            raise JetError(
                f"coefficient axis of length {coeffs.shape[-1:]} does not match {space}"
            )
        coeffs.setflags(write=False)
        self.space = space
        self.coeffs = coeffs

    @classmethod
    def _new(cls, space, coeffs):
        """Wrap a freshly computed float array (or a view of one) without copying."""
        out = object.__new__(cls)
        if coeffs.flags.writeable:
            coeffs.setflags(write=False)
        out.space = space
        out.coeffs = coeffs
        return out

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, nvars, order):
        space = get_space(nvars, order)
        value = _coeff_array(value)
        coeffs = np.zeros(value.shape + (space.size,))
        coeffs[..., 0] = value
        return cls(space, coeffs)

    @classmethod
    def variable(cls, i, value, nvars, order):
        """The jet of ``value + x_i``."""
        out = np.zeros(get_space(nvars, order).size)
        out[0] = value
        if order >= 1:
            out[1 + i] = 1.0
        return cls(get_space(nvars, order), out)

    @classmethod
    def coordinates(cls, point, order):
        """Jets of all coordinate functions at ``point`` (shape (n,))."""
        point = np.asarray(point, dtype=float)
        n = len(point)
        space = get_space(n, order)
        coeffs = np.zeros((n, space.size))
        coeffs[:, 0] = point
        if order >= 1:
            coeffs[:, 1 : 1 + n] = np.eye(n)
        return cls(space, coeffs)

    # basic attributes -------------------------------------------------
    @property
    def nvars(self):
        return self.space.nvars

    @property
    def order(self):
        return self.space.order

    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def ndim(self):
        return self.coeffs.ndim - 1

    def __len__(self):
        if not self.shape:
            raise TypeError("len() of a scalar jet")
        return self.shape[0]

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, shape={self.shape})"

    def values(self):
        """Constant terms, i.e. the values at the base point."""
        return self.coeffs[..., 0].copy()

    def gradient(self):
        if self.order < 1:
            raise JetError("gradient needs order >= 1")
        return self.coeffs[..., 1 : 1 + self.nvars].copy()

    def hessian(self):
        if self.order < 2:
            raise JetError("hessian needs order >= 2")
        n = self.nvars
        out = np.empty(self.shape + (n, n))
        for i in range(n):
            for j in range(n):
                alpha = [0] * n
                alpha[i] += 1
                alpha[j] += 1
                k = self.space.index[tuple(alpha)]
                out[..., i, j] = self.coeffs[..., k] * (2.0 if i == j else 1.0)
        return out

    def coefficient(self, alpha):
        return self.coeffs[..., self.space.index[tuple(alpha)]].copy()

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            key = key + (slice(None),)
        return Jet._new(self.space, self.coeffs[key])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet._new(self.space, self.coeffs.reshape(tuple(shape) + (self.space.size,)))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], tuple):
            axes = axes[0]
        return Jet._new(self.space, self.coeffs.transpose(tuple(axes) + (self.ndim,)))

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (axis,)
        axis = tuple(a % self.ndim for a in axis)
        return Jet._new(self.space, self.coeffs.sum(axis=axis))

    # truncation and differentiation ------------------------------------
    def truncate(self, order):
        if order > self.order:
            raise JetError(f"cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        space = get_space(self.nvars, order)
        return Jet(space, self.coeffs[..., : space.size])

    def partial(self, i):
        if self.order < 1:
            raise JetError("cannot differentiate a jet of order 0")
        if not 0 <= i < self.nvars:
            raise JetError(f"variable index {i} out of range")
        src, fac = self.space.partial_table(i)
        return Jet(get_space(self.nvars, self.order - 1), self.coeffs[..., src] * fac)

    def derivatives(self):
        """All first partials stacked on a new trailing axis."""
        return stack([self.partial(i) for i in range(self.nvars)], axis=-1)

    # arithmetic ---------------------------------------------------------
    def _check(self, other):
        if other.space is not self.space:
            raise JetError(f"jet mismatch: {self.space} vs {other.space}")

    def _lift(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return other
        value = _coeff_array(other)
        coeffs = np.zeros(value.shape + (self.space.size,))
        coeffs[..., 0] = value
        return Jet._new(self.space, coeffs)

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet._new(self.space, self.coeffs + other.coeffs)
        if isinstance(other, (int, float)):
            coeffs = self.coeffs.copy()
            coeffs[..., 0] += other
            return Jet._new(self.space, coeffs)
        value = _coeff_array(other)
        coeffs = np.broadcast_to(self.coeffs, np.broadcast_shapes(self.shape, value.shape) + (self.space.size,)).copy()
        coeffs[..., 0] += value
        return Jet._new(self.space, coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet._new(self.space, -self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            value = _coeff_array(other)
            return Jet._new(self.space, self.coeffs * value[..., None])
        self._check(other)
        left, right, starts = self.space.mul_tables
        prod = self.coeffs[..., left] * other.coeffs[..., right]
        return Jet._new(self.space, np.add.reduceat(prod, starts, axis=-1))

    __rmul__ = __mul__

    def reciprocal(self):
        a0 = self.coeffs[..., 0]
        if np.any(a0 == 0):
            raise JetDomainError("division by a jet with zero constant term")
        # 1/(a0 (1+u)) = (1/a0) * sum (-u)^m with u nilpotent
        u = Jet(self.space, self.coeffs / a0[..., None])
        u = u - 1.0
        acc = self._lift(np.ones(self.shape))
        for _ in range(self.order):
            acc = 1.0 - u * acc
        return acc * (1.0 / a0)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self * other.reciprocal()
        value = _coeff_array(other)
        if np.any(value == 0):
            raise JetDomainError("division by zero")
        return Jet._new(self.space, self.coeffs / value[..., None])

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if isinstance(k, (bool, np.bool_)) or not isinstance(k, (int, np.integer)):
            raise JetError("jets support integer powers only")
        k = int(k)
        if k < 0:
            return self.reciprocal() ** (-k)
        result = self._lift(np.ones(self.shape))
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def apply(self, name):
        """Compose with one of the analytic functions exp, log, sin, cos, sqrt."""
        a0 = self.coeffs[..., 0]
        K = self.order
        if name == "exp":
            e0 = np.exp(a0)
            taylor = [e0 / math.factorial(k) for k in range(K + 1)]
        elif name == "log":
            if np.any(a0 <= 0):
                raise JetDomainError("log of a jet with non-positive constant term")
            taylor = [np.log(a0)] + [(-1.0) ** (k + 1) / (k * a0**k) for k in range(1, K + 1)]
        elif name == "sin":
            taylor = [np.sin(a0 + k * np.pi / 2) / math.factorial(k) for k in range(K + 1)]
        elif name == "cos":
            taylor = [np.cos(a0 + k * np.pi / 2) / math.factorial(k) for k in range(K + 1)]
        elif name == "sqrt":
            if np.any(a0 < 0) or (K > 0 and np.any(a0 == 0)):
                raise JetDomainError("sqrt of a jet outside its domain")
            taylor = []
            binom = 1.0
            for k in range(K + 1):
                with np.errstate(divide="ignore", invalid="ignore"):
                    taylor.append(binom * np.sqrt(a0) / a0**k if k else np.sqrt(a0))
                binom *= (0.5 - k) / (k + 1)
        else:
            raise JetError(f"unknown analytic function {name!r}")
        nil = Jet(self.space, self.coeffs) - a0
        acc = self._lift(taylor[K])
        for k in range(K - 1, -1, -1):
            acc = acc * nil + taylor[k]
        return acc

    def exp(self):
        return self.apply("exp")

    def log(self):
        return self.apply("log")

    def sin(self):
        return self.apply("sin")

    def cos(self):
        return self.apply("cos")

    def sqrt(self):
        return self.apply("sqrt")


def zeros(shape, nvars, order):
    space = get_space(nvars, order)
    if isinstance(shape, int):
        shape = (shape,)
    return Jet(space, np.zeros(tuple(shape) + (space.size,)))


def stack(jets, axis=0):
    jets = list(jets)
    if not jets:
        raise JetError("cannot stack an empty list")
    space = jets[0].space
    for j in jets[1:]:
        if j.space is not space:
            raise JetError(f"jet mismatch: {space} vs {j.space}")
    ndim = jets[0].ndim + 1
    axis = axis % ndim
    return Jet._new(space, np.stack([j.coeffs for j in jets], axis=axis))


def as_jet(x, like: Jet) -> Jet:
    return like._lift(x)


def jet_einsum(subscripts: str, *operands):
    """Einstein summation over the tensor axes of jets and plain arrays.

    At most two operands may be jets; products of jets are taken in the
    jet ring.  Subscripts refer to the tensor axes only.
    """
    lhs, rhs = subscripts.replace(" ", "").split("->")
    terms = lhs.split(",")
    if len(terms) != len(operands):
        raise JetError("subscript count does not match operand count")
    used = set(subscripts)
    spare = [ch for ch in string.ascii_letters if ch not in used]
    jets = [k for k, op in enumerate(operands) if isinstance(op, Jet)]
    if not jets:
        return np.einsum(subscripts, *operands)
    space = operands[jets[0]].space
    for k in jets:
        if operands[k].space is not space:
            raise JetError(f"jet mismatch: {space} vs {operands[k].space}")
    if len(jets) == 1:
        c = spare[0]
        ops = [op.coeffs if isinstance(op, Jet) else np.asarray(op) for op in operands]
        terms = [t + c if k == jets[0] else t for k, t in enumerate(terms)]
        return Jet._new(space, np.einsum(",".join(terms) + "->" + rhs + c, *ops, optimize=True))
    if len(jets) > 2:
        raise JetError("at most two jet operands are supported")
    left, right, starts = space.mul_tables
    p = spare[0]
    ops = []
    new_terms = []
    first = True
    for k, (t, op) in enumerate(zip(terms, operands)):
        if isinstance(op, Jet):
            ops.append(op.coeffs[..., left if first else right])
            first = False
            new_terms.append(t + p)
        else:
            ops.append(np.asarray(op))
            new_terms.append(t)
    prod = np.einsum(",".join(new_terms) + "->" + rhs + p, *ops, optimize=True)
    return Jet._new(space, np.add.reduceat(prod, starts, axis=-1))


def compose_affine(jet: Jet, shift, matrix=None, order=None) -> Jet:
    """Re-expand the polynomial ``jet`` as ``f(shift + matrix @ x)``.

    ``jet`` is read as a polynomial in the displacement from its base point;
    the result is its jet in the new variables ``x`` (default order: same).
    """
    n = jet.nvars
    shift = np.asarray(shift, dtype=float)
    matrix = np.eye(n) if matrix is None else np.asarray(matrix, dtype=float)
    m = matrix.shape[1]
    order = jet.order if order is None else order
    space = jet.space
    out_space = get_space(m, order)
    lin = np.zeros((n, out_space.size))
    lin[:, 0] = shift
    if order >= 1:
        lin[:, 1 : 1 + m] = matrix
    lin = Jet(out_space, lin)
    monos = np.zeros((space.size, out_space.size))
    monos[0, 0] = 1.0
    for k in range(1, space.size):
        alpha = list(space.alphas[k])
        v = next(i for i, a in enumerate(alpha) if a > 0)
        alpha[v] -= 1
        prev = Jet(out_space, monos[space.index[tuple(alpha)]])
        monos[k] = (prev * lin[v]).coeffs
    return Jet(out_space, jet.coeffs @ monos)


def evaluate_polynomial(jet: Jet, displacement) -> np.ndarray:
    """Value of the truncated Taylor polynomial at ``base + displacement``."""
    d = np.asarray(displacement, dtype=float)
    powers = np.prod(d[None, :] ** jet.space.alpha_array, axis=1)
    return jet.coeffs @ powers


def jet_solve(M: Jet, B: Jet) -> Jet:
    """Solve ``M X = B`` over the jet ring.

    Gaussian elimination with row pivoting decided by the constant terms;
    back substitution divides by the pivot jets.  ``M`` has shape (n, n) and
    ``B`` shape (n,) or (n, m).
    """
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise JetError("jet_solve needs a square matrix")
    if M.space is not B.space:
        raise JetError(f"jet mismatch: {M.space} vs {B.space}")
    vector = B.ndim == 1
    n = M.shape[0]
    a = M.coeffs.copy()
    b = B.coeffs.copy()
    if vector:
        b = b[:, None, :]
    space = M.space
    scale = max(np.abs(M.coeffs[..., 0]).max(), 1e-300) if n else 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col, 0])))
        if abs(a[piv, col, 0]) <= 1e-14 * scale:
            raise SingularJetMatrixError("constant part of the matrix is singular")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        if col + 1 == n:
            break
        inv = Jet(space, a[col, col]).reciprocal()
        factors = Jet(space, a[col + 1 :, col]) * inv
        a[col + 1 :] -= (factors[:, None] * Jet(space, a[col])[None, :]).coeffs
        b[col + 1 :] -= (factors[:, None] * Jet(space, b[col])[None, :]).coeffs
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        rhs = Jet(space, b[row])
        if row + 1 < n:
            rest = Jet(space, a[row, row + 1 :])[:, None] * Jet(space, x[row + 1 :])
            rhs = rhs - rest.sum(axis=0)
        x[row] = (rhs / Jet(space, a[row, row])).coeffs
    if vector:
        x = x[:, 0, :]
    return Jet(space, x)


class UniSeries:
    """Truncated power series in one variable, ``sum coeffs[k] t**k``."""

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise JetError("a series needs a nonempty 1-d coefficient list")
        coeffs.setflags(write=False)
        self.coeffs = coeffs

    @property
    def order(self):
        return self.coeffs.size - 1

    def __repr__(self):
        return f"UniSeries({list(self.coeffs)})"

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def __len__(self):
        return self.coeffs.size

    def truncate(self, order):
        if order > self.order:
            raise JetError(f"series of order {self.order} cannot be extended to {order}")
        return UniSeries(self.coeffs[: order + 1])

    def padded(self, order):
        out = np.zeros(order + 1)
        k = min(order, self.order) + 1
        out[:k] = self.coeffs[:k]
        return UniSeries(out)

    def _other(self, other):
        if isinstance(other, UniSeries):
            if other.order != self.order:
                raise JetError("series orders differ")
            return other.coeffs
        out = np.zeros_like(self.coeffs)
        out[0] = other
        return out

    def __add__(self, other):
        return UniSeries(self.coeffs + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return UniSeries(self.coeffs - self._other(other))

    def __rsub__(self, other):
        return UniSeries(self._other(other) - self.coeffs)

    def __neg__(self):
        return UniSeries(-self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, UniSeries):
            return UniSeries(self.coeffs * float(other))
        self._other(other)
        return UniSeries(np.convolve(self.coeffs, other.coeffs)[: self.order + 1])

    __rmul__ = __mul__

    def derivative(self):
        if self.order == 0:
            return UniSeries([0.0])
        k = np.arange(1, self.order + 1)
        return UniSeries(self.coeffs[1:] * k)

    def antiderivative(self, value_at_zero=0.0):
        out = np.empty(self.order + 2)
        out[0] = value_at_zero
        out[1:] = self.coeffs / np.arange(1, self.order + 2)
        return UniSeries(out)

    def to_jet(self) -> Jet:
        return Jet(get_space(1, self.order), self.coeffs)

    @classmethod
    def from_jet(cls, jet: Jet):
        if jet.nvars != 1 or jet.ndim != 0:
            raise JetError("only scalar one-variable jets convert to series")
        return cls(jet.coeffs)


# thin functional wrappers -------------------------------------------------

def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_div(a: Jet, b: Jet) -> Jet:
    return a / b


def jet_apply_analytic(f: str, a: Jet) -> Jet:
    return a.apply(f)


def jet_partial(a: Jet, i: int) -> Jet:
    return a.partial(i)


def uniseries_antiderivative(f: UniSeries, value_at_zero: float = 0.0) -> UniSeries:
    return f.antiderivative(value_at_zero)
