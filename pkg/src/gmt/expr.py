"""Scalar expressions over named coordinates.

Grammar (standard precedence, ``^`` right-associative)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation works on plain floats or on numpy arrays (one array per
coordinate, broadcast together).  ``eval_dual`` propagates forward-mode dual
numbers so the full gradient comes out of a single pass.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

Number = Union[float, np.ndarray]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}

# integer exponents beyond this fall back to np.power
_MAX_INT_EXPONENT = 64


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        super().__init__(f"syntax error at offset {offset}: expected {expected}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class CoordinateRangeError(ExprError):
    def __init__(self, name: str, index: int, arity: int, offset: int):
        self.name = name
        self.index = index
        self.arity = arity
        self.offset = offset
        super().__init__(
            f"coordinate {name!r} at offset {offset} outside 1..{arity}"
        )


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation."""

    def __init__(self, message: str, node: "Node"):
        self.node = node
        super().__init__(f"{message} in {to_source(node)}")


class NonDifferentiableError(DomainError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    index: int  # 1-based
    prefix: str = "x"


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Coord, Const, Neg, BinOp, Call]


def to_source(node: Node) -> str:
    """Canonical, fully parenthesized text of ``node``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Coord):
        return f"{node.prefix}{node.index}"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)}{node.op}{to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(node)


def _walk(node: Node):
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.operand)
    elif isinstance(node, BinOp):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        yield from _walk(node.arg)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos, "number, identifier or operator")
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, arity: int, prefix: str):
        self.source = source
        self.arity = arity
        self.prefix = prefix
        self.coord_re = re.compile(re.escape(prefix) + r"([1-9][0-9]*)$")
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            raise ExprSyntaxError(self.tok.offset, repr(text))

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(self.tok.offset, "operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.power())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.pos += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.pos += 1
            if self.accept("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifierError(tok.text, tok.offset)
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ExprSyntaxError(tok.offset, f"one argument to {tok.text}")
                return Call(tok.text, args[0])
            return self.identifier(tok)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(tok.offset, "expression")

    def identifier(self, tok: _Token) -> Node:
        if tok.text in CONSTANTS:
            return Const(tok.text)
        m = self.coord_re.match(tok.text)
        if m:
            index = int(m.group(1))
            if index > self.arity:
                raise CoordinateRangeError(tok.text, index, self.arity, tok.offset)
            return Coord(index, self.prefix)
        if tok.text in FUNCTIONS:
            raise ExprSyntaxError(tok.offset + len(tok.text), "'('")
        raise UnknownIdentifierError(tok.text, tok.offset)


@dataclass(frozen=True)
class Expression:
    root: Node
    arity: int
    prefix: str = "x"

    def __str__(self) -> str:
        return to_source(self.root)

    def eval(self, point: Sequence[Number]) -> Number:
        return evaluate(self, point)

    def eval_dual(self, point: Sequence[Number]) -> "DualValue":
        return evaluate_dual(self, point)

    def coordinates(self) -> set[int]:
        return {n.index for n in _walk(self.root) if isinstance(n, Coord)}


def parse(source: str, arity: int, coord_prefix: str = "x") -> Expression:
    """Parse ``source`` into an Expression over ``prefix1 .. prefix<arity>``.

    Arity 0 is allowed for constant expressions.
    """
    if not source or not source.strip():
        raise ExprSyntaxError(0, "expression")
    if arity < 0:
        raise ValueError("arity must be non-negative")
    root = _Parser(source, arity, coord_prefix).parse()
    return Expression(root, arity, coord_prefix)


# ---------------------------------------------------------------------------
# Evaluation


def _check_point(e: Expression, point: Sequence[Number]) -> list:
    point = list(point)
    if len(point) != e.arity:
        raise ValueError(f"expected {e.arity} coordinates, got {len(point)}")
    return point


def _integer_exponent(b) -> int | None:
    if np.ndim(b) != 0:
        return None
    b = float(b)
    if b == int(b) and abs(b) <= _MAX_INT_EXPONENT:
        return int(b)
    return None


def _int_power(x, k: int, one):
    result = one
    for _ in range(abs(k)):
        result = result * x
    return result


def _any(mask) -> bool:
    return bool(np.any(mask))


def _apply(func: str, x, node: Node):
    if func == "sin":
        return np.sin(x)
    if func == "cos":
        return np.cos(x)
    if func == "exp":
        return np.exp(x)
    if func == "log":
        if _any(x <= 0):
            raise DomainError("log of non-positive value", node)
        return np.log(x)
    if func == "sqrt":
        if _any(x < 0):
            raise DomainError("sqrt of negative value", node)
        return np.sqrt(x)
    if func == "abs":
        return np.abs(x)
    raise ExprError(f"unknown function {func}")


def _eval(node: Node, point: list):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Coord):
        return point[node.index - 1]
    if isinstance(node, Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_eval(node.operand, point)
    if isinstance(node, Call):
        return _apply(node.func, _eval(node.arg, point), node)
    a = _eval(node.left, point)
    b = _eval(node.right, point)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if _any(b == 0):
            raise DomainError("division by zero", node)
        return a / b
    k = _integer_exponent(b)
    if k is not None:
        if k < 0:
            if _any(a == 0):
                raise DomainError("division by zero", node)
            return 1.0 / _int_power(a, -k, np.float64(1.0))
        return _int_power(a, k, np.float64(1.0))
    integral = np.equal(np.mod(b, 1.0), 0.0)
    if _any((a < 0) & ~integral):
        raise DomainError("negative base with non-integer exponent", node)
    if _any((a == 0) & (b <= 0)):
        raise DomainError("zero base with non-positive exponent", node)
    return np.power(a, b)


def _as_coords(point) -> tuple[list, tuple]:
    if not any(np.ndim(p) for p in point):
        return [np.float64(p) for p in point], ()
    arrays = np.broadcast_arrays(*(np.asarray(p, dtype=float) for p in point))
    return list(arrays), arrays[0].shape


def evaluate(e: Expression, point: Sequence[Number]) -> Number:
    """Value of ``e`` at ``point``; float for scalar input, array otherwise."""
    coords, shape = _as_coords(_check_point(e, point))
    with np.errstate(all="ignore"):
        value = _eval(e.root, coords)
    if shape == ():
        return float(value)
    return np.broadcast_to(value, shape).astype(float)


# ---------------------------------------------------------------------------
# Dual numbers


class DualValue:
    """A value together with its partial derivatives.

    ``partials`` has one leading entry per coordinate followed by the shape
    of ``value`` (empty for scalar evaluation).
    """

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = value
        self.partials = partials

    def __repr__(self) -> str:
        return f"DualValue({self.value!r}, {self.partials!r})"

    def __add__(self, other: "DualValue") -> "DualValue":
        return DualValue(self.value + other.value, self.partials + other.partials)

    def __sub__(self, other: "DualValue") -> "DualValue":
        return DualValue(self.value - other.value, self.partials - other.partials)

    def __neg__(self) -> "DualValue":
        return DualValue(-self.value, -self.partials)

    def __mul__(self, other: "DualValue") -> "DualValue":
        return DualValue(
            self.value * other.value,
            self.partials * other.value + self.value * other.partials,
        )

    def __truediv__(self, other: "DualValue") -> "DualValue":
        value = self.value / other.value
        return DualValue(
            value, (self.partials - value * other.partials) / other.value
        )


class _DualContext:
    def __init__(self, point: list, arity: int, ndim: int):
        self.point = point
        self.arity = arity
        self.zero = np.zeros((arity,) + (1,) * ndim)

    def constant(self, value) -> DualValue:
        return DualValue(np.float64(value), self.zero)

    def coord(self, index: int) -> DualValue:
        seed = self.zero.copy()
        seed[index - 1] = 1.0
        return DualValue(self.point[index - 1], seed)


def _dual_call(func: str, x: DualValue, node: Node) -> DualValue:
    v, dv = x.value, x.partials
    if func == "sin":
        return DualValue(np.sin(v), np.cos(v) * dv)
    if func == "cos":
        return DualValue(np.cos(v), -np.sin(v) * dv)
    if func == "exp":
        ev = np.exp(v)
        return DualValue(ev, ev * dv)
    if func == "log":
        if _any(v <= 0):
            raise DomainError("log of non-positive value", node)
        return DualValue(np.log(v), dv / v)
    if func == "sqrt":
        if _any(v < 0):
            raise DomainError("sqrt of negative value", node)
        if _any(v == 0):
            raise NonDifferentiableError("sqrt not differentiable at 0", node)
        sv = np.sqrt(v)
        return DualValue(sv, dv / (2.0 * sv))
    if func == "abs":
        if _any(v == 0):
            raise NonDifferentiableError("abs not differentiable at 0", node)
        return DualValue(np.abs(v), np.sign(v) * dv)
    raise ExprError(f"unknown function {func}")


def _dual_power(a: DualValue, b: DualValue, node: Node, ctx: _DualContext) -> DualValue:
    varying_exponent = bool(np.any(b.partials))
    k = _integer_exponent(b.value)
    if k is not None:
        one = ctx.constant(1.0)
        if k < 0:
            if _any(a.value == 0):
                raise DomainError("division by zero", node)
            result = one / _int_power(a, -k, one)
        else:
            result = _int_power(a, k, one)
    else:
        integral = np.equal(np.mod(b.value, 1.0), 0.0)
        if _any((a.value < 0) & ~integral):
            raise DomainError("negative base with non-integer exponent", node)
        if _any(a.value <= 0):
            raise NonDifferentiableError(
                "power not differentiable at non-positive base", node
            )
        value = np.power(a.value, b.value)
        result = DualValue(value, b.value * np.power(a.value, b.value - 1.0) * a.partials)
    if varying_exponent:
        if _any(a.value <= 0):
            raise NonDifferentiableError(
                "variable exponent needs a positive base", node
            )
        result = DualValue(
            result.value, result.partials + result.value * np.log(a.value) * b.partials
        )
    return result


def _dual(node: Node, ctx: _DualContext) -> DualValue:
    if isinstance(node, Num):
        return ctx.constant(node.value)
    if isinstance(node, Coord):
        return ctx.coord(node.index)
    if isinstance(node, Const):
        return ctx.constant(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_dual(node.operand, ctx)
    if isinstance(node, Call):
        return _dual_call(node.func, _dual(node.arg, ctx), node)
    a = _dual(node.left, ctx)
    b = _dual(node.right, ctx)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if _any(b.value == 0):
            raise DomainError("division by zero", node)
        return a / b
    return _dual_power(a, b, node, ctx)


def evaluate_dual(e: Expression, point: Sequence[Number]) -> DualValue:
    """Value and gradient of ``e`` at ``point`` by forward-mode propagation.

    For array inputs ``partials`` has shape ``(arity,) + broadcast shape``.
    """
    coords, shape = _as_coords(_check_point(e, point))
    ctx = _DualContext(coords, e.arity, len(shape))
    with np.errstate(all="ignore"):
        d = _dual(e.root, ctx)
    if shape == ():
        return DualValue(float(d.value), np.array(d.partials, dtype=float).reshape(e.arity))
    value = np.broadcast_to(d.value, shape).astype(float)
    partials = np.broadcast_to(d.partials, (e.arity,) + shape).astype(float)
    return DualValue(value, partials)
