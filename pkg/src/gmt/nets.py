"""Riemann-sum nets over tagged partitions and monotone net limits.

The directed set of all tagged partitions of [a, b] cannot be walked, so
limits are taken along a cofinal chain: repeated uniform bisection.  Any
partition is refined by a fine enough uniform one, which is what makes the
chain cofinal.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .expr import Expression
from .extended import INF, Extended

# bisection stops here regardless of max_steps (2**24 cells)
MAX_CELLS = 1 << 24


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TaggedPartition:
    points: np.ndarray
    tags: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        tags = np.asarray(self.tags, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ValueError("partition needs at least two points")
        if not np.all(np.diff(points) > 0):
            raise ValueError("partition points must be strictly increasing")
        if tags.shape != (points.size - 1,):
            raise ValueError("need exactly one tag per cell")
        if np.any(tags < points[:-1]) or np.any(tags > points[1:]):
            raise ValueError("tag outside its cell")
        points.flags.writeable = False
        tags.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "tags", tags)

    @classmethod
    def uniform(cls, a: float, b: float, cells: int, tag: str = "mid") -> "TaggedPartition":
        points = np.linspace(a, b, cells + 1)
        return cls(points, _place_tags(points, tag))

    @property
    def cells(self) -> int:
        return self.tags.size

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def refines(self, other: "TaggedPartition") -> bool:
        return bool(np.all(np.isin(other.points, self.points)))


def _place_tags(points: np.ndarray, tag: str) -> np.ndarray:
    if tag == "mid":
        return 0.5 * (points[:-1] + points[1:])
    if tag == "left":
        return points[:-1].copy()
    if tag == "right":
        return points[1:].copy()
    raise ValueError(f"unknown tag rule {tag!r}")


def riemann_sum(f: Expression, p: TaggedPartition) -> float:
    """sum_i f(t_i) (x_i - x_{i-1})"""
    values = np.broadcast_to(f.eval([p.tags]), p.tags.shape)
    return float(np.sum(values * np.diff(p.points)))


def refine(p: TaggedPartition, tag: str = "mid") -> TaggedPartition:
    """Bisect every cell; tags go to the new cell midpoints by default."""
    x = p.points
    points = np.empty(2 * x.size - 1)
    points[0::2] = x
    points[1::2] = 0.5 * (x[:-1] + x[1:])
    return TaggedPartition(points, _place_tags(points, tag))


@dataclass(frozen=True)
class RefinementNet:
    initial: TaggedPartition
    refine_rule: Callable[[TaggedPartition], TaggedPartition] = refine

    @classmethod
    def bisection(cls, a: float, b: float, tag: str = "mid") -> "RefinementNet":
        return cls(TaggedPartition.uniform(a, b, 1, tag), lambda p: refine(p, tag))

    def chain(self):
        p = self.initial
        while True:
            yield p
            p = self.refine_rule(p)


@dataclass
class ConvergenceReport:
    steps: list[int] = field(default_factory=list)
    cells: list[int] = field(default_factory=list)
    widths: list[float] = field(default_factory=list)
    sums: list[float] = field(default_factory=list)
    deltas: list[Optional[float]] = field(default_factory=list)
    converged: bool = False

    def rows(self):
        return list(zip(self.steps, self.cells, self.sums, self.deltas))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "cells", "sum", "delta"])
        for step, cells, s, d in self.rows():
            w.writerow([step, cells, f"{s:.17g}", "" if d is None else f"{d:.17g}"])
        return buf.getvalue()


def net_limit(seq: RefinementNet, f: Expression, abs_tol: float, max_steps: int):
    """Walk the refinement chain until successive sums differ by < abs_tol.

    Returns (value, report).  Raises NonConvergenceError carrying the report
    when ``max_steps`` sums have been computed without meeting the tolerance.
    """
    if abs_tol <= 0:
        raise ValueError("abs_tol must be positive")
    report = ConvergenceReport()
    previous = None
    for step, p in enumerate(seq.chain()):
        if step >= max_steps or p.cells > MAX_CELLS:
            break
        s = riemann_sum(f, p)
        delta = None if previous is None else abs(s - previous)
        report.steps.append(step)
        report.cells.append(p.cells)
        report.widths.append(p.mesh)
        report.sums.append(s)
        report.deltas.append(delta)
        if delta is not None and delta < abs_tol:
            report.converged = True
            return s, report
        previous = s
    raise NonConvergenceError(
        f"Riemann net did not settle to {abs_tol:g} within {len(report.sums)} steps",
        report,
    )


def monotone_net_limit(
    values: Sequence[float], bound: Optional[float] = None, unbounded: bool = False
) -> Extended:
    """Limit of a nondecreasing chain: its supremum, or INF if unbounded.

    ``unbounded`` lets the caller declare divergence; ``bound`` declares an
    upper bound whose violation also means divergence.
    """
    values = list(values)
    if not values:
        raise ValueError("empty chain")
    for k in range(1, len(values)):
        if values[k] < values[k - 1]:
            raise ValueError(
                f"chain not monotone at position {k}: {values[k - 1]!r} > {values[k]!r}"
            )
    if unbounded or (bound is not None and values[-1] > bound):
        return INF
    return values[-1]
