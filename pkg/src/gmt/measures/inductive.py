"""Finite models of increasing nets and inductive systems of measures.

Everything lives on a finite cell algebra: a set is a collection of cell
labels and a measure is a nonnegative mass per cell, so finite additivity
holds by construction.  Masses may be the explicit ``INF`` marker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Hashable, Iterable, Mapping, NamedTuple, Optional, Sequence

from .. import extended as ext
from ..extended import INF, Extended


class UndefinedIntegralError(ArithmeticError):
    pass


class Check(NamedTuple):
    ok: bool
    witness: Optional[tuple] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class CellAlgebra:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("cell labels must be distinct")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, cells: Iterable[Hashable]) -> frozenset:
        cells = frozenset(cells)
        unknown = cells.difference(self.labels)
        if unknown:
            raise ValueError(f"unknown cells {sorted(map(str, unknown))}")
        return cells


@dataclass(frozen=True)
class MeasureTable:
    algebra: CellAlgebra
    masses: tuple

    def __post_init__(self):
        masses = tuple(m if ext.is_inf(m) else float(m) for m in self.masses)
        if len(masses) != len(self.algebra):
            raise ValueError("one mass per cell required")
        for label, m in zip(self.algebra.labels, masses):
            if (ext.is_inf(m) and m.sign < 0) or (not ext.is_inf(m) and not m >= 0):
                raise ValueError(f"negative mass {m!r} on cell {label!r}")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_mapping(cls, algebra: CellAlgebra, masses: Mapping) -> "MeasureTable":
        return cls(algebra, tuple(masses.get(c, 0.0) for c in algebra.labels))

    def mass(self, cell) -> Extended:
        return self.masses[self.algebra.labels.index(cell)]

    def measure(self, cells: Iterable[Hashable]) -> Extended:
        chosen = self.algebra.subset(cells)
        return ext.total(m for c, m in zip(self.algebra.labels, self.masses) if c in chosen)

    def restrict(self, cells: Iterable[Hashable]) -> "MeasureTable":
        keep = self.algebra.subset(cells)
        return MeasureTable(
            self.algebra,
            tuple(m if c in keep else 0.0 for c, m in zip(self.algebra.labels, self.masses)),
        )


def check_directed(elements: Sequence[Hashable], relation: Iterable[tuple]) -> Check:
    """Is ``relation`` (pairs (i, j) meaning i <= j) a directed preorder?

    On failure the witness is ``(i,)`` for reflexivity, ``(i, j, k)`` for
    transitivity, or the pair ``(i, j)`` that has no common upper bound.
    """
    elements = list(elements)
    rel = set(relation)
    for i in elements:
        if (i, i) not in rel:
            return Check(False, (i,), "not reflexive")
    for i, j, k in product(elements, repeat=3):
        if (i, j) in rel and (j, k) in rel and (i, k) not in rel:
            return Check(False, (i, j, k), "not transitive")
    for a in range(len(elements)):
        for b in range(a + 1, len(elements)):
            i, j = elements[a], elements[b]
            if not any((i, k) in rel and (j, k) in rel for k in elements):
                return Check(False, (i, j), "no common upper bound")
    return Check(True)


@dataclass(frozen=True)
class DirectedSet:
    elements: tuple
    relation: frozenset

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "relation", frozenset(tuple(p) for p in self.relation))
        check = check_directed(self.elements, self.relation)
        if not check:
            raise ValueError(f"index is not a directed set: {check.reason} {check.witness}")

    @classmethod
    def from_order(cls, elements: Sequence[Hashable], leq) -> "DirectedSet":
        return cls(tuple(elements), frozenset((i, j) for i in elements for j in elements if leq(i, j)))

    @classmethod
    def chain(cls, n: int) -> "DirectedSet":
        return cls.from_order(range(n), lambda i, j: i <= j)

    def leq(self, i, j) -> bool:
        return (i, j) in self.relation

    def comparable_pairs(self):
        """Pairs (i, j) with j <= i, i != j."""
        return [(i, j) for i in self.elements for j in self.elements if i != j and self.leq(j, i)]


@dataclass(frozen=True)
class InductiveSystem:
    """Increasing net of measures i -> mu_i together with sets i -> Omega_i.

    Construction checks the structural invariants (directed index,
    monotone exhausting Omega_i, increasing masses).  Compatibility is
    checked separately by ``check_compatibility`` so that violating systems
    can still be built and inspected.
    """

    algebra: CellAlgebra
    index: DirectedSet
    omegas: Mapping
    measures: Mapping

    def __post_init__(self):
        omegas = {i: self.algebra.subset(self.omegas[i]) for i in self.index.elements}
        measures = dict(self.measures)
        if set(measures) != set(self.index.elements):
            raise ValueError("one measure per index required")
        for table in measures.values():
            if table.algebra != self.algebra:
                raise ValueError("measure on a different cell algebra")
        for i, j in self.index.relation:
            if not omegas[i] <= omegas[j]:
                raise ValueError(f"Omega_{i!r} not contained in Omega_{j!r}")
            for c, mi, mj in zip(self.algebra.labels, measures[i].masses, measures[j].masses):
                if not ext.less_equal(mi, mj):
                    raise ValueError(f"net not increasing: mu_{i!r}({c!r}) > mu_{j!r}({c!r})")
        if frozenset().union(*omegas.values()) != frozenset(self.algebra.labels):
            raise ValueError("the Omega_i do not exhaust the ground set")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "measures", measures)

    def to_json(self) -> str:
        def enc(x):
            return list(x) if isinstance(x, tuple) else x

        return json.dumps(
            {
                "cells": [enc(c) for c in self.algebra.labels],
                "index": [enc(i) for i in self.index.elements],
                "relation": [[enc(i), enc(j)] for i, j in sorted(self.index.relation, key=repr)],
                "omegas": [
                    [enc(i), [enc(c) for c in self.algebra.labels if c in self.omegas[i]]]
                    for i in self.index.elements
                ],
                "measures": [
                    [enc(i), [ext.to_json(m) for m in self.measures[i].masses]]
                    for i in self.index.elements
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "InductiveSystem":
        def dec(x):
            return tuple(dec(y) for y in x) if isinstance(x, list) else x

        data = json.loads(text)
        algebra = CellAlgebra(tuple(dec(c) for c in data["cells"]))
        index = DirectedSet(
            tuple(dec(i) for i in data["index"]),
            frozenset((dec(i), dec(j)) for i, j in data["relation"]),
        )
        omegas = {dec(i): frozenset(dec(c) for c in cells) for i, cells in data["omegas"]}
        measures = {
            dec(i): MeasureTable(algebra, tuple(ext.from_json(m) for m in masses))
            for i, masses in data["measures"]
        }
        return cls(algebra, index, omegas, measures)


def check_compatibility(s: InductiveSystem) -> Check:
    """mu_i(A & Omega_j) == mu_j(A & Omega_j) for every j <= i and every A.

    Both sides are sums of cell masses over A & Omega_j, so the identity
    holds for every A exactly when it holds cell by cell; the per-cell test
    is therefore exhaustive.  Witness: (i, j, cell).
    """
    labels = s.algebra.labels
    for i, j in s.index.comparable_pairs():
        mi, mj = s.measures[i].masses, s.measures[j].masses
        for k, c in enumerate(labels):
            if c in s.omegas[j] and mi[k] != mj[k]:
                return Check(False, (i, j, c), "compatibility condition fails")
    return Check(True)


def generalized_limit(s: InductiveSystem) -> MeasureTable:
    """Setwise limit of the increasing net: per-cell supremum over the index."""
    tables = [s.measures[i].masses for i in s.index.elements]
    return MeasureTable(s.algebra, tuple(ext.maximum(col) for col in zip(*tables)))


def _values(f, algebra: CellAlgebra) -> list:
    if isinstance(f, Mapping):
        return [f.get(c, 0.0) for c in algebra.labels]
    f = list(f)
    if len(f) != len(algebra):
        raise ValueError("one function value per cell required")
    return f


def integrate_table(f, mu: MeasureTable) -> Extended:
    """Integral of the simple function f (per-cell values) against ``mu``.

    Signed ``f`` is split into positive and negative parts; the integral is
    undefined when both parts integrate to infinity.
    """
    values = _values(f, mu.algebra)
    pos = ext.total(ext.mul(max(v, 0.0), m) for v, m in zip(values, mu.masses))
    neg = ext.total(ext.mul(max(-v, 0.0), m) for v, m in zip(values, mu.masses))
    if ext.is_inf(pos) and ext.is_inf(neg):
        raise UndefinedIntegralError("both the positive and negative parts are infinite")
    if ext.is_inf(pos):
        return INF
    if ext.is_inf(neg):
        return ext.NEG_INF
    return pos - neg


def _close(a: Extended, b: Extended, rel: float) -> bool:
    if ext.is_inf(a) or ext.is_inf(b):
        return a == b
    return abs(a - b) <= rel * max(abs(a), abs(b))


def restriction_theorem_check(s: InductiveSystem, f, i0, rel_tol: float = 1e-12) -> bool:
    """Does int f d(lim mu_i) equal int f d mu_{i0} for f vanishing off Omega_{i0}?"""
    values = _values(f, s.algebra)
    outside = [c for c, v in zip(s.algebra.labels, values) if v != 0 and c not in s.omegas[i0]]
    if outside:
        raise ValueError(f"f does not vanish outside Omega_{i0!r}: cells {outside}")
    limit = generalized_limit(s)
    return _close(integrate_table(values, limit), integrate_table(values, s.measures[i0]), rel_tol)
