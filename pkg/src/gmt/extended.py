"""Extended nonnegative reals with an explicit infinity marker.

Masses and integrals may be infinite.  A float ``inf`` would make
``0 * inf`` a NaN, so infinity is a distinct object and the product
convention ``0 * INF == 0`` is applied on purpose in ``mul``.
"""

from __future__ import annotations

import math
from typing import Union


class Infinite:
    __slots__ = ("sign",)

    def __init__(self, sign: int):
        self.sign = sign

    def __repr__(self) -> str:
        return "INF" if self.sign > 0 else "NEG_INF"

    def __str__(self) -> str:
        return "+inf" if self.sign > 0 else "-inf"

    def __eq__(self, other) -> bool:
        return isinstance(other, Infinite) and other.sign == self.sign

    def __hash__(self) -> int:
        return hash(("Infinite", self.sign))


INF = Infinite(1)
NEG_INF = Infinite(-1)

Extended = Union[float, Infinite]


def is_inf(x) -> bool:
    return isinstance(x, Infinite)


def add(a: Extended, b: Extended) -> Extended:
    if is_inf(a) and is_inf(b) and a != b:
        raise ArithmeticError("+inf + -inf is undefined")
    if is_inf(a):
        return a
    if is_inf(b):
        return b
    return a + b


def mul(a: Extended, b: Extended) -> Extended:
    """Product with 0 * inf == 0."""
    if is_inf(a) or is_inf(b):
        finite = b if is_inf(a) else a
        if not is_inf(finite) and finite == 0:
            return 0.0
        sign = (a.sign if is_inf(a) else math.copysign(1, a)) * (
            b.sign if is_inf(b) else math.copysign(1, b)
        )
        return INF if sign > 0 else NEG_INF
    return a * b


def less_equal(a: Extended, b: Extended) -> bool:
    if is_inf(b):
        return b.sign > 0 or a == b
    if is_inf(a):
        return a.sign < 0
    return a <= b


def maximum(values) -> Extended:
    result = None
    for v in values:
        if result is None or less_equal(result, v):
            result = v
    if result is None:
        raise ValueError("maximum of empty sequence")
    return result


def total(values) -> Extended:
    """Exactly rounded sum; any infinity dominates."""
    finite = []
    result: Extended = 0.0
    for v in values:
        if is_inf(v):
            result = add(result, v)
        else:
            finite.append(v)
    if is_inf(result):
        return result
    return math.fsum(finite)


def to_json(x: Extended):
    return str(x) if is_inf(x) else x


def from_json(x) -> Extended:
    if x == "+inf":
        return INF
    if x == "-inf":
        return NEG_INF
    return float(x)
