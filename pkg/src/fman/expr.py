"""Small expression language used by model files.

Expressions are immutable trees.  They can be parsed from text, printed back
with minimal parentheses, evaluated on floats or on jets, and rewritten under
an affine change of coordinates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .jet import Jet, JetError

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class ExprError(ValueError):
    pass


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int


class ExprSyntaxError(ExprError):
    def __init__(self, message, span: SourceSpan, text: str = ""):
        super().__init__(f"{message} at bytes {span.start}..{span.end}")
        self.span = span
        self.text = text


class EvaluationError(ExprError):
    pass


class SingularMatrixError(ExprError):
    pass


# tree nodes -----------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Coord:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Const, Coord, Neg, Add, Sub, Mul, Div, Pow, Call]
_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


# parsing ----------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", SourceSpan(pos, pos + 1), text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), m.start(), m.end()))
        pos = m.end()
    tokens.append(("eof", "", len(text), len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, start, end=None):
        end = start if end is None else end
        raise ExprSyntaxError(message, SourceSpan(start, end), self.text)

    def expect(self, value, opened_at=None):
        tok = self.peek()
        if tok[1] != value or tok[0] == "eof":
            if opened_at is not None:
                self.error(f"expected {value!r}", opened_at, tok[3])
            self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2], tok[3])
        return self.take()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            self.error(f"unexpected {tok[1]!r}", tok[2], tok[3])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            node = Add(node, right) if op == "+" else Sub(node, right)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.factor()
            node = Mul(node, right) if op == "*" else Div(node, right)
        return node

    def factor(self):
        # unary minus binds looser than ^, so -x^2 reads as -(x^2)
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            start = self.peek()[2]
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok[0] != "number":
                self.error("exponent must be an integer literal", start, tok[3])
            if not re.fullmatch(r"\d+", tok[1]):
                self.error(f"exponent {tok[1]!r} is not an integer", start, tok[3])
            node = Pow(node, sign * int(tok[1]))
            if self.peek()[1] == "^":
                tok = self.peek()
                self.error("chained powers need parentheses", tok[2], tok[3])
        return node

    def atom(self):
        tok = self.take()
        kind, value, start, end = tok
        if kind == "number":
            return Const(float(value))
        if kind == "ident":
            if self.peek()[1] == "(":
                if value not in FUNCTIONS:
                    self.error(f"unknown function {value!r}", start, end)
                self.take()
                if self.peek()[0] == "eof":
                    self.error(f"unclosed call to {value}", start, self.peek()[3])
                arg = self.expr()
                self.expect(")", opened_at=start)
                return Call(value, arg)
            if value in FUNCTIONS:
                self.error(f"function {value!r} needs an argument", start, end)
            return Coord(value)
        if value == "(":
            if self.peek()[0] == "eof":
                self.error("unclosed parenthesis", start, self.peek()[3])
            node = self.expr()
            self.expect(")", opened_at=start)
            return node
        if kind == "eof":
            self.error("unexpected end of input", start, end)
        self.error(f"unexpected {value!r}", start, end)


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.isascii():
        # spans are byte offsets; keep them meaningful by rejecting non-ASCII early
        for k, ch in enumerate(text):
            if not ch.isascii():
                start = len(text[:k].encode("utf-8"))
                raise ExprSyntaxError(
                    f"unexpected character {ch!r}",
                    SourceSpan(start, start + len(ch.encode("utf-8"))),
                    text,
                )
    return _Parser(text).parse()


# printing ---------------------------------------------------------------------

def _fmt_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def _prec(node) -> int:
    if isinstance(node, (Add, Sub)):
        return 1
    if isinstance(node, (Mul, Div)):
        return 2
    if isinstance(node, Neg) or (isinstance(node, Const) and math.copysign(1.0, node.value) < 0):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def to_string(node: Expr) -> str:
    """Print with the fewest parentheses that parse back to the same tree."""
    if isinstance(node, Const):
        if math.copysign(1.0, node.value) < 0:
            return "-" + _fmt_number(-node.value)
        return _fmt_number(node.value)
    if isinstance(node, Coord):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        return "-" + (inner if _prec(node.arg) >= 3 else f"({inner})")
    if isinstance(node, Pow):
        base = to_string(node.base)
        if _prec(node.base) < 5:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    op = _BINARY[type(node)]
    p = _prec(node)
    left = to_string(node.left)
    if _prec(node.left) < p:
        left = f"({left})"
    right = to_string(node.right)
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


# evaluation -------------------------------------------------------------------

def coordinates(node: Expr) -> set:
    if isinstance(node, Coord):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, (Neg, Call)):
        return coordinates(node.arg)
    if isinstance(node, Pow):
        return coordinates(node.base)
    return coordinates(node.left) | coordinates(node.right)


def _eval(node, env, const):
    if isinstance(node, Const):
        return const(node.value)
    if isinstance(node, Coord):
        try:
            return env[node.name]
        except KeyError:
            raise EvaluationError(f"unknown coordinate {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env, const)
    if isinstance(node, Add):
        return _eval(node.left, env, const) + _eval(node.right, env, const)
    if isinstance(node, Sub):
        return _eval(node.left, env, const) - _eval(node.right, env, const)
    if isinstance(node, Mul):
        return _eval(node.left, env, const) * _eval(node.right, env, const)
    if isinstance(node, Div):
        return _eval(node.left, env, const) / _eval(node.right, env, const)
    if isinstance(node, Pow):
        return _eval(node.base, env, const) ** node.exponent
    if isinstance(node, Call):
        arg = _eval(node.arg, env, const)
        if isinstance(arg, Jet):
            return arg.apply(node.func)
        return getattr(math, node.func)(arg)
    raise ExprError(f"not an expression node: {node!r}")


def eval_float(node: Expr, env: Mapping[str, float]) -> float:
    try:
        return float(_eval(node, env, float))
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        if isinstance(exc, ExprError):
            raise
        raise EvaluationError(str(exc)) from exc


def eval_expr_jet(node: Expr, coords: Sequence[str], point, order: int) -> Jet:
    """Taylor jet of the expression at ``point`` in the variables ``coords``."""
    point = np.asarray(point, dtype=float)
    if len(point) != len(coords):
        raise EvaluationError(f"point has {len(point)} entries for {len(coords)} coordinates")
    xs = Jet.coordinates(point, order)
    env = {name: xs[k] for k, name in enumerate(coords)}
    try:
        out = _eval(node, env, float)
    except JetError as exc:
        raise EvaluationError(str(exc)) from exc
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        if isinstance(exc, ExprError):
            raise
        raise EvaluationError(str(exc)) from exc
    if not isinstance(out, Jet):
        out = Jet.constant(out, len(coords), order)
    return out


# rewriting --------------------------------------------------------------------

def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(node, Const):
        return node
    if isinstance(node, Coord):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, mapping))
    if isinstance(node, Pow):
        return Pow(substitute(node.base, mapping), node.exponent)
    return type(node)(substitute(node.left, mapping), substitute(node.right, mapping))


def _affine_expr(row, offset, names):
    terms = []
    for coef, name in zip(row, names):
        if coef == 0:
            continue
        terms.append((coef, Coord(name)))
    node = None
    for coef, var in terms:
        mag = abs(coef)
        piece = var if mag == 1 else Mul(Const(float(mag)), var)
        if node is None:
            node = piece if coef > 0 else Neg(piece)
        else:
            node = Add(node, piece) if coef > 0 else Sub(node, piece)
    if offset != 0 or node is None:
        if node is None:
            return Const(float(offset))
        node = Add(node, Const(float(offset))) if offset > 0 else Sub(node, Const(float(-offset)))
    return node


def substitute_linear(node: Expr, coords: Sequence[str], matrix, offset=None, new_coords=None) -> Expr:
    """Replace each coordinate ``x_i`` by ``sum_j matrix[i, j] y_j + offset[i]``.

    The new variables default to the old names, so the result evaluated at
    ``y`` equals the original evaluated at ``matrix @ y + offset``.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = len(coords)
    if matrix.shape != (n, n):
        raise ExprError(f"matrix must be {n}x{n}")
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if np.linalg.matrix_rank(matrix) < n:
        raise SingularMatrixError("coordinate change matrix is singular")
    new_coords = list(coords) if new_coords is None else list(new_coords)
    mapping = {
        name: _affine_expr(matrix[i], offset[i], new_coords) for i, name in enumerate(coords)
    }
    return substitute(node, mapping)
