"""Charts on parameter boxes, their Jacobians and Gram volume elements."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Expression, parse

# relative threshold on det(J^T J) below which a chart is not an immersion
RANK_TOL = 1e-12


class RankDeficiencyError(ArithmeticError):
    def __init__(self, u, det: float):
        self.u = tuple(float(x) for x in u)
        self.det = det
        super().__init__(f"chart is not an immersion at u={self.u} (det g = {det:.3e})")


@dataclass(frozen=True)
class ParamBox:
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ValueError("parameter box needs at least one axis")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"degenerate box axis [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in self.bounds)

    def contains(self, u: Sequence[float]) -> bool:
        return all(lo <= x <= hi for x, (lo, hi) in zip(u, self.bounds))


@dataclass(frozen=True)
class Chart:
    """A smooth map from an m-box into R^n, one Expression per component."""

    components: tuple[Expression, ...]
    domain: ParamBox

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        m = self.domain.dim
        if not self.components:
            raise ValueError("chart needs at least one component")
        if m > len(self.components):
            raise ValueError(f"param_dim {m} exceeds ambient_dim {len(self.components)}")
        for c in self.components:
            if c.arity != m:
                raise ValueError(f"component {c} has arity {c.arity}, expected {m}")

    @classmethod
    def from_strings(cls, maps: Sequence[str], bounds) -> "Chart":
        domain = bounds if isinstance(bounds, ParamBox) else ParamBox(tuple(bounds))
        return cls(tuple(parse(s, domain.dim, "u") for s in maps), domain)

    @property
    def param_dim(self) -> int:
        return self.domain.dim

    @property
    def ambient_dim(self) -> int:
        return len(self.components)

    def map_points(self, us: np.ndarray) -> np.ndarray:
        """Images of parameter points ``us`` (shape (N, m)) -> (N, n)."""
        us = np.atleast_2d(np.asarray(us, dtype=float))
        cols = [us[:, k] for k in range(self.param_dim)]
        return np.stack([c.eval(cols) for c in self.components], axis=-1)

    def jacobians(self, us: np.ndarray) -> np.ndarray:
        """Jacobians at parameter points ``us`` (shape (N, m)) -> (N, n, m)."""
        us = np.atleast_2d(np.asarray(us, dtype=float))
        cols = [us[:, k] for k in range(self.param_dim)]
        rows = [c.eval_dual(cols).partials for c in self.components]  # each (m, N)
        return np.stack(rows, axis=0).transpose(2, 0, 1)

    def volume_elements(self, us: np.ndarray) -> np.ndarray:
        """sqrt(det(J^T J)) at each parameter point."""
        us = np.atleast_2d(np.asarray(us, dtype=float))
        return _gram_sqrt_det(self.jacobians(us), us)


def _gram_sqrt_det(J: np.ndarray, us: np.ndarray) -> np.ndarray:
    m = J.shape[-1]
    G = np.einsum("nik,nil->nkl", J, J)
    scale = np.max(np.diagonal(G, axis1=1, axis2=2), axis=1)
    rank_tol = RANK_TOL * scale**m
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        dets = np.linalg.det(G)
        bad = int(np.argmin(dets - rank_tol))
        raise RankDeficiencyError(us[bad], float(dets[bad])) from None
    root = np.prod(np.diagonal(L, axis1=1, axis2=2), axis=1)
    det = root * root
    bad = np.flatnonzero(~(det >= rank_tol) | (scale == 0))
    if bad.size:
        raise RankDeficiencyError(us[bad[0]], float(det[bad[0]]))
    return root


def jacobian(c: Chart, u: Sequence[float]) -> np.ndarray:
    """n x m Jacobian of ``c`` at ``u``; column k is the partial in u_k."""
    return c.jacobians(np.asarray(u, dtype=float)[None, :])[0]


def gram_volume_element(c: Chart, u: Sequence[float]) -> float:
    """Volume element sqrt(det(J^T J)) of ``c`` at ``u``.

    Raises RankDeficiencyError when det(J^T J) drops below
    ``1e-12 * max(diag(J^T J))**m``.
    """
    u = np.asarray(u, dtype=float)[None, :]
    return float(_gram_sqrt_det(c.jacobians(u), u)[0])


def unit_ball_volume(m: int) -> float:
    """Lebesgue measure of the unit ball in R^m: 2 pi^(m/2) / (m Gamma(m/2))."""
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    return 2.0 * math.pi ** (m / 2) / (m * math.gamma(m / 2))
