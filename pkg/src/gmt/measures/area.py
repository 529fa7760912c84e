"""Integration against the m-dimensional Hausdorff measure of a finite
disjoint union of charts.

Each chart contributes the integral over its parameter box of
(f o phi)(u) * sqrt(det(J^T J))(u); contributions are summed.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Sequence

import numpy as np

from ..expr import Expression
from ..geometry import Chart
from ..nets import NonConvergenceError

GAUSS_ORDER = 8
MAX_DEPTH = 16
# total integrand evaluations per chart before giving up
MAX_EVALUATIONS = 4_000_000
OVERLAP_SAMPLES = 10_000
OVERLAP_DISTANCE = 1e-9


class OverlapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DisjointManifold:
    charts: tuple[Chart, ...]
    ambient_dim: int

    def __post_init__(self):
        object.__setattr__(self, "charts", tuple(self.charts))
        if not self.charts:
            raise ValueError("need at least one chart")
        for c in self.charts:
            if c.ambient_dim != self.ambient_dim:
                raise ValueError(
                    f"chart has ambient_dim {c.ambient_dim}, expected {self.ambient_dim}"
                )

    @property
    def param_dim(self) -> int:
        return self.charts[0].param_dim


def _rng(seed=None) -> np.random.Generator:
    if seed is None:
        env = os.environ.get("GMT_SEED")
        seed = int(env) if env else 0
    return np.random.default_rng(seed)


def check_overlap(M: DisjointManifold, samples: int = OVERLAP_SAMPLES, seed=None) -> list:
    """Sample chart images and report pairs of charts whose images come
    within OVERLAP_DISTANCE of each other.  Emits an OverlapWarning per pair."""
    from scipy.spatial import cKDTree

    # one sample set on the unit cube, mapped affinely into every chart's box,
    # so charts that share a parameterisation land on identical image points
    rng = _rng(seed)
    unit = rng.random(size=(samples, max(c.param_dim for c in M.charts)))
    images = []
    for c in M.charts:
        lo, hi = c.domain.lo, c.domain.hi
        images.append(c.map_points(lo + (hi - lo) * unit[:, : c.param_dim]))
    hits = []
    for a, b in combinations(range(len(M.charts)), 2):
        close = cKDTree(images[a]).query_ball_tree(cKDTree(images[b]), OVERLAP_DISTANCE)
        if any(close):
            hits.append((a, b))
            warnings.warn(f"charts {a} and {b} have overlapping images", OverlapWarning)
    return hits


@dataclass
class ChartIntegral:
    value: float
    depth: int
    cells: int
    evaluations: int


@dataclass
class AreaResult:
    value: float
    charts: list[ChartIntegral] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return max(c.depth for c in self.charts)


def _rule(m: int):
    x, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    nodes = np.array(list(product((x + 1) / 2, repeat=m)))  # on [0, 1]^m
    weights = np.prod(np.array(list(product(w / 2, repeat=m))), axis=1)
    return nodes, weights


def _children(lo: np.ndarray, width: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = lo.shape[1]
    half = width / 2
    offsets = np.array(list(product((0.0, 1.0), repeat=m)))
    lo_c = (lo[:, None, :] + offsets[None, :, :] * half[:, None, :]).reshape(-1, m)
    return lo_c, np.repeat(half, len(offsets), axis=0)


def integrate_chart(f: Expression, chart: Chart, abs_tol: float) -> ChartIntegral:
    """Adaptive tensor-product Gauss-Legendre over the chart's box.

    A cell is accepted once its estimate agrees with the sum over its 2^m
    dyadic children to within its share (by volume) of ``abs_tol``.
    """
    m = chart.param_dim
    nodes, weights = _rule(m)
    box = chart.domain
    box_volume = box.volume
    evaluations = 0

    def estimate(lo, width):
        nonlocal evaluations
        us = (lo[:, None, :] + nodes[None, :, :] * width[:, None, :]).reshape(-1, m)
        evaluations += len(us)
        x = chart.map_points(us)
        fx = f.eval([x[:, k] for k in range(chart.ambient_dim)])
        g = np.broadcast_to(fx, (len(us),)) * chart.volume_elements(us)
        return (g.reshape(len(lo), -1) @ weights) * np.prod(width, axis=1)

    lo = box.lo[None, :]
    width = (box.hi - box.lo)[None, :]
    coarse = estimate(lo, width)
    total = 0.0
    accepted = 0
    depth = 0
    while lo.shape[0]:
        depth += 1
        if depth > MAX_DEPTH or evaluations > MAX_EVALUATIONS:
            raise NonConvergenceError(
                f"chart quadrature did not reach {abs_tol:g} "
                f"(depth {depth - 1}, {lo.shape[0]} open cells)"
            )
        lo_c, width_c = _children(lo, width)
        fine = estimate(lo_c, width_c).reshape(lo.shape[0], -1)
        fine_sum = fine.sum(axis=1)
        share = abs_tol * np.prod(width, axis=1) / box_volume
        floor = 64 * np.finfo(float).eps * np.abs(fine).sum(axis=1)
        done = np.abs(fine_sum - coarse) <= np.maximum(share, floor)
        total += math.fsum(fine_sum[done])
        accepted += int(done.sum())
        keep = np.repeat(~done, 2**m)
        lo, width = lo_c[keep], width_c[keep]
        coarse = fine.reshape(-1)[keep]
    return ChartIntegral(total, depth, accepted, evaluations)


def hausdorff_integrate_report(f: Expression, M: DisjointManifold, abs_tol: float) -> AreaResult:
    if abs_tol <= 0:
        raise ValueError("abs_tol must be positive")
    if f.arity != M.ambient_dim:
        raise ValueError(f"field has arity {f.arity}, manifold lives in R^{M.ambient_dim}")
    per_chart = abs_tol / len(M.charts)
    parts = [integrate_chart(f, c, per_chart) for c in M.charts]
    return AreaResult(sum(p.value for p in parts), parts)


def hausdorff_integrate(f: Expression, M: DisjointManifold, abs_tol: float) -> float:
    """Integral of ``f`` against H_{m<=n} over the disjoint union ``M``.

    Each chart is converged to ``abs_tol / len(M.charts)``.
    """
    return hausdorff_integrate_report(f, M, abs_tol).value
