"""Level-set extraction and a numerical check of the coarea identity

    int_{a <= H <= b} f dx  =  int_a^b  int_{H = t} f / |grad H| dA  dt

for smooth H: R^n -> R with n in {2, 3}.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional, Sequence

import numpy as np

from .expr import Expression

GRAD_TOL = 1e-8
# residual bound for sample points, in units of the grid cell diagonal
SLICE_TOL_FACTOR = 1e-6
NEWTON_STEPS = 6
EXCLUDED_BUDGET = 0.05
GAUSS_NODES_PER_PANEL = 2


class CriticalSliceError(ArithmeticError):
    def __init__(self, t: float, point, grad_norm: float):
        self.t = t
        self.point = tuple(float(x) for x in point)
        self.grad_norm = grad_norm
        super().__init__(
            f"level {t!r} is (near) critical: |grad H| = {grad_norm:.3e} at {self.point}"
        )


class ExcludedSliceBudgetError(ArithmeticError):
    def __init__(self, report: "CoareaReport", budget: float):
        self.report = report
        super().__init__(
            f"critical slices cover t-measure {report.excluded_t_measure:.4g}, "
            f"more than the allowed {budget:.4g}"
        )


@dataclass(frozen=True)
class ImplicitField:
    h: Expression

    def __post_init__(self):
        if self.h.arity not in (2, 3):
            raise ValueError("implicit fields are supported in dimension 2 and 3 only")

    @property
    def dim(self) -> int:
        return self.h.arity


@dataclass(frozen=True)
class GridSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    res: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        res = tuple(int(r) for r in self.res)
        if not (len(lo) == len(hi) == len(res)):
            raise ValueError("lo, hi and res must have the same length")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("degenerate grid box")
        if any(r < 2 for r in res):
            raise ValueError("grid resolution must be at least 2 per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "res", res)

    @classmethod
    def cube(cls, lo: float, hi: float, res: int, dim: int) -> "GridSpec":
        return cls((lo,) * dim, (hi,) * dim, (res,) * dim)

    @property
    def dim(self) -> int:
        return len(self.res)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.res)

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    @property
    def slice_tol(self) -> float:
        return SLICE_TOL_FACTOR * self.cell_diagonal

    def refined(self) -> "GridSpec":
        return GridSpec(self.lo, self.hi, tuple(2 * r for r in self.res))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, r + 1) for a, b, r in zip(self.lo, self.hi, self.res)]


@dataclass
class SliceMesh:
    """Piecewise-linear approximation of {H = t} inside the grid box.

    ``vertices`` has shape (E, n, n): E elements (segments for n = 2,
    triangles for n = 3) of n vertices each.  ``samples`` are per-element
    points on the level set used for one-point quadrature.
    """

    t: float
    vertices: np.ndarray
    samples: np.ndarray
    element_measure: np.ndarray
    grad_norm: np.ndarray

    def __len__(self) -> int:
        return len(self.element_measure)

    @property
    def measure(self) -> float:
        return math.fsum(self.element_measure)


def _sample_grid(H: ImplicitField, g: GridSpec):
    if g.dim != H.dim:
        raise ValueError(f"grid is {g.dim}-dimensional, field is {H.dim}-dimensional")
    axes = g.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, H.h.eval(mesh)


# Each square is cut along its main diagonal; each cube into the six
# tetrahedra sharing its main diagonal (Kuhn triangulation).
_SQUARE_SIMPLICES = [((0, 0), (1, 0), (1, 1)), ((0, 0), (0, 1), (1, 1))]


def _kuhn_tetrahedra():
    tets = []
    for perm in permutations(range(3)):
        v = [0, 0, 0]
        verts = [tuple(v)]
        for axis in perm:
            v[axis] = 1
            verts.append(tuple(v))
        tets.append(tuple(verts))
    return tets


_CUBE_SIMPLICES = _kuhn_tetrahedra()


def _corner(arr: np.ndarray, offset: tuple, res: tuple) -> np.ndarray:
    idx = tuple(slice(o, o + r) for o, r in zip(offset, res))
    return arr[idx]


def _crossing(p, v, i, j, t):
    """Point where the linear interpolant along edge (i, j) equals t."""
    vi = v[:, i][:, None]
    vj = v[:, j][:, None]
    return p[:, i] + (t - vi) / (vj - vi) * (p[:, j] - p[:, i])


def _march(axes, values, t: float):
    """Marching simplices; returns an (E, n, n) array of element vertices."""
    n = len(axes)
    res = tuple(len(a) - 1 for a in axes)
    above = values >= t
    # cells whose corners are not all on one side
    corners = [_corner(above, o, res) for o in np.ndindex(*(2,) * n)]
    count = np.sum(corners, axis=0)
    cells = np.nonzero((count > 0) & (count < 2**n))
    if cells[0].size == 0:
        return np.zeros((0, n, n))
    base = np.stack(cells, axis=1)
    simplices = _SQUARE_SIMPLICES if n == 2 else _CUBE_SIMPLICES
    out = []
    for simplex in simplices:
        idx = base[:, None, :] + np.array(simplex)[None, :, :]  # (C, n+1, n)
        p = np.stack([axes[k][idx[..., k]] for k in range(n)], axis=-1)
        v = values[tuple(idx[..., k] for k in range(n))]
        s = v >= t
        pos = s.sum(axis=1)
        if n == 2:
            out.append(_triangle_cases(p, v, s, pos, t))
        else:
            out.extend(_tetra_cases(p, v, s, pos, t))
    out = [o for o in out if len(o)]
    if not out:
        return np.zeros((0, n, n))
    return np.concatenate(out)


def _triangle_cases(p, v, s, pos, t):
    mixed = (pos == 1) | (pos == 2)
    p, v, s, pos = p[mixed], v[mixed], s[mixed], pos[mixed]
    odd = np.where(pos == 1, np.argmax(s, axis=1), np.argmin(s, axis=1))
    rows = np.arange(len(p))
    a, b = (odd + 1) % 3, (odd + 2) % 3
    pp = p[rows[:, None], np.stack([odd, a, b], axis=1)]
    vv = v[rows[:, None], np.stack([odd, a, b], axis=1)]
    return np.stack([_crossing(pp, vv, 0, 1, t), _crossing(pp, vv, 0, 2, t)], axis=1)


def _tetra_cases(p, v, s, pos, t):
    out = []
    single = (pos == 1) | (pos == 3)
    if single.any():
        ps, vs, ss, pos_s = p[single], v[single], s[single], pos[single]
        odd = np.where(pos_s == 1, np.argmax(ss, axis=1), np.argmin(ss, axis=1))
        rows = np.arange(len(ps))[:, None]
        order = np.stack([odd, (odd + 1) % 4, (odd + 2) % 4, (odd + 3) % 4], axis=1)
        pp, vv = ps[rows, order], vs[rows, order]
        out.append(np.stack([_crossing(pp, vv, 0, k, t) for k in (1, 2, 3)], axis=1))
    split = pos == 2
    if split.any():
        ps, vs, ss = p[split], v[split], s[split]
        # stable sort puts the two vertices below t first
        order = np.argsort(ss, axis=1, kind="stable")
        rows = np.arange(len(ps))[:, None]
        pp, vv = ps[rows, order], vs[rows, order]
        # below: 0, 1; above: 2, 3.  Quad 02 -> 03 -> 13 -> 12 around the cut.
        e02 = _crossing(pp, vv, 0, 2, t)
        e03 = _crossing(pp, vv, 0, 3, t)
        e13 = _crossing(pp, vv, 1, 3, t)
        e12 = _crossing(pp, vv, 1, 2, t)
        out.append(np.stack([e02, e03, e13], axis=1))
        out.append(np.stack([e02, e13, e12], axis=1))
    return out


def _element_measure(vertices: np.ndarray) -> np.ndarray:
    if vertices.shape[1] == 2:
        return np.linalg.norm(vertices[:, 1] - vertices[:, 0], axis=1)
    cross = np.cross(vertices[:, 1] - vertices[:, 0], vertices[:, 2] - vertices[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def _project(H: ImplicitField, points: np.ndarray, t: float, tol: float):
    """Newton steps along grad H moving points onto {H = t}."""
    x = points.copy()
    for _ in range(NEWTON_STEPS):
        d = H.h.eval_dual([x[:, k] for k in range(H.dim)])
        grad = d.partials.T
        norm2 = np.einsum("ij,ij->i", grad, grad)
        residual = d.value - t
        if np.all(np.abs(residual) <= tol):
            return x, np.sqrt(norm2)
        safe = np.where(norm2 > GRAD_TOL**2, norm2, np.inf)
        x = x - (residual / safe)[:, None] * grad
    d = H.h.eval_dual([x[:, k] for k in range(H.dim)])
    return x, np.linalg.norm(d.partials, axis=0)


def _build_mesh(H: ImplicitField, t: float, g: GridSpec, axes, values) -> SliceMesh:
    n = H.dim
    vertices = _march(axes, values, t)
    if len(vertices) == 0:
        empty = np.zeros((0,))
        return SliceMesh(t, vertices, np.zeros((0, n)), empty, empty)
    measure = _element_measure(vertices)
    keep = measure > 0
    vertices, measure = vertices[keep], measure[keep]
    samples, grad_norm = _project(H, vertices.mean(axis=1), t, g.slice_tol)
    low = np.flatnonzero(grad_norm < GRAD_TOL)
    if low.size:
        k = low[0]
        raise CriticalSliceError(t, samples[k], float(grad_norm[k]))
    return SliceMesh(t, vertices, samples, measure, grad_norm)


def extract_level_set(H: ImplicitField, t: float, g: GridSpec) -> SliceMesh:
    """Piecewise-linear approximation of H^{-1}(t) inside the grid box.

    Each grid simplex contributes at most one segment (2D) or two
    triangles (3D).  Raises CriticalSliceError if |grad H| < GRAD_TOL at
    any element sample point; a level set missing the box gives an empty
    mesh.
    """
    axes, values = _sample_grid(H, g)
    return _build_mesh(H, float(t), g, axes, values)


def _mesh_integral(f: Expression, H: ImplicitField, mesh: SliceMesh) -> float:
    if len(mesh) == 0:
        return 0.0
    fx = f.eval([mesh.samples[:, k] for k in range(H.dim)])
    fx = np.broadcast_to(fx, mesh.element_measure.shape)
    return math.fsum(fx / mesh.grad_norm * mesh.element_measure)


def slice_integral(f: Expression, H: ImplicitField, t: float, g: GridSpec) -> float:
    """One-point quadrature of f / |grad H| over the extracted level set."""
    return _mesh_integral(f, H, extract_level_set(H, t, g))


def _fraction_below(v: np.ndarray, c: float) -> np.ndarray:
    """Volume fraction of each simplex where the linear interpolant is <= c.

    ``v`` holds the vertex values, one simplex per row (3 or 4 columns).
    """
    v = np.sort(v, axis=1)
    d = v.shape[1] - 1
    frac = np.where(c >= v[:, -1], 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if d == 2:
            v0, v1, v2 = v.T
            low = (c > v0) & (c <= v1) & (c < v2)
            frac = np.where(low, (c - v0) ** 2 / ((v1 - v0) * (v2 - v0)), frac)
            high = (c > v1) & (c < v2)
            frac = np.where(high, 1 - (v2 - c) ** 2 / ((v2 - v0) * (v2 - v1)), frac)
            return frac
        v0, v1, v2, v3 = v.T
        low = (c > v0) & (c <= v1) & (c < v3)
        frac = np.where(low, (c - v0) ** 3 / ((v1 - v0) * (v2 - v0) * (v3 - v0)), frac)
        high = (c >= v2) & (c > v1) & (c < v3)
        frac = np.where(high, 1 - (v3 - c) ** 3 / ((v3 - v0) * (v3 - v1) * (v3 - v2)), frac)
        mid = (c > v1) & (c < v2)
        if mid.any():
            frac[mid] = _tetra_middle(v0[mid], v1[mid], v2[mid], v3[mid], c)
    return frac


def _tetra_middle(v0, v1, v2, v3, c):
    # Two vertices below c, two above.  The fraction is minus the divided
    # difference of g(x) = (c - x)^3 / ((v2 - x)(v3 - x)) over [v0, v1];
    # for a (near) coincident pair use the derivative instead.
    def g(x):
        return (c - x) ** 3 / ((v2 - x) * (v3 - x))

    def dg(x):
        a, p, q = c - x, v2 - x, v3 - x
        return -3 * a**2 / (p * q) + a**3 * (1 / (p * p * q) + 1 / (p * q * q))

    gap = v1 - v0
    close = gap <= 1e-7 * (v3 - v0)
    safe_gap = np.where(close, 1.0, gap)
    return np.where(close, -dg(v0), -(g(v1) - g(v0)) / safe_gap)


def _cell_corner_values(values: np.ndarray, simplex) -> np.ndarray:
    res = tuple(s - 1 for s in values.shape)
    return np.stack([_corner(values, o, res) for o in simplex], axis=-1)


def region_integral(
    f: Expression,
    H: ImplicitField,
    a: float,
    b: float,
    g: GridSpec,
    method: str = "fraction",
) -> float:
    """Integral of f over {a <= H <= b} inside the grid box.

    ``method="fraction"`` weights f at each cell centre by the exact volume
    of {a <= H_lin <= b}, where H_lin interpolates H linearly on the same
    simplices the level-set extraction uses.  ``method="midpoint"`` keeps
    whole cells whose centre satisfies a <= H <= b (error O(h), erratic).
    """
    if not a < b:
        raise ValueError("need a < b")
    if g.dim != H.dim or f.arity != H.dim:
        raise ValueError("dimension mismatch between f, H and the grid")
    centres = [(ax[:-1] + ax[1:]) / 2 for ax in g.axes()]
    mesh = np.meshgrid(*centres, indexing="ij")
    cell_volume = float(np.prod(g.spacing))
    if method == "midpoint":
        hv = H.h.eval(mesh)
        weight = ((hv >= a) & (hv <= b)).astype(float)
    elif method == "fraction":
        _, values = _sample_grid(H, g)
        simplices = _SQUARE_SIMPLICES if g.dim == 2 else _CUBE_SIMPLICES
        weight = np.zeros(g.res)
        for simplex in simplices:
            v = _cell_corner_values(values, simplex).reshape(-1, g.dim + 1)
            part = _fraction_below(v, b) - _fraction_below(v, a)
            weight += part.reshape(g.res) / len(simplices)
        weight = np.clip(weight, 0.0, 1.0)
    else:
        raise ValueError(f"unknown method {method!r}")
    inside = weight > 0
    if not inside.any():
        return 0.0
    fx = np.broadcast_to(f.eval([m[inside] for m in mesh]), (int(inside.sum()),))
    return math.fsum(fx * weight[inside]) * cell_volume


@dataclass
class SliceRecord:
    t: float
    weight: float
    value: Optional[float]
    status: str  # ok | empty | critical


@dataclass
class CoareaReport:
    lhs: float
    rhs: float
    abs_err: float
    rel_err: float
    excluded_t_measure: float
    per_slice: list[SliceRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
            "excluded_t_measure": self.excluded_t_measure,
            "per_slice": [
                {"t": s.t, "value": s.value, "status": s.status} for s in self.per_slice
            ],
        }

    def to_json(self) -> str:
        from .report import dumps

        return dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "weight", "value", "status"])
        for s in self.per_slice:
            w.writerow(
                [f"{s.t:.17g}", f"{s.weight:.17g}", "" if s.value is None else f"{s.value:.17g}", s.status]
            )
        return buf.getvalue()


def gauss_panels(a: float, b: float, panels: int, order: int = GAUSS_NODES_PER_PANEL):
    """Nodes and weights of composite Gauss-Legendre on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = (edges[1:] - edges[:-1]) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def coarea_check(
    f: Expression,
    H: ImplicitField,
    a: float,
    b: float,
    g: GridSpec,
    n_slices: int,
    threads: int = 1,
) -> CoareaReport:
    """Compare the region integral with the integral over t of slice integrals.

    The outer integral uses ``n_slices`` Gauss-Legendre panels with two
    nodes each.  Near-critical slices are excluded and their total weight
    is reported; more than 5% of (b - a) excluded raises
    ExcludedSliceBudgetError.
    """
    if not a < b:
        raise ValueError("need a < b")
    if n_slices < 4:
        raise ValueError("need at least 4 slices")
    lhs = region_integral(f, H, a, b, g)
    axes, values = _sample_grid(H, g)
    nodes, weights = gauss_panels(a, b, n_slices)

    def one(t):
        t = float(t)
        try:
            mesh = _build_mesh(H, t, g, axes, values)
        except CriticalSliceError:
            return None, "critical"
        if len(mesh) == 0:
            return 0.0, "empty"
        return _mesh_integral(f, H, mesh), "ok"

    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, nodes))
    else:
        results = [one(t) for t in nodes]

    records = [
        SliceRecord(float(t), float(w), value, status)
        for t, w, (value, status) in zip(nodes, weights, results)
    ]
    excluded = math.fsum(r.weight for r in records if r.status == "critical")
    rhs = math.fsum(r.weight * r.value for r in records if r.value is not None)
    abs_err = abs(lhs - rhs)
    if lhs != 0:
        rel_err = abs_err / abs(lhs)
    else:
        rel_err = 0.0 if rhs == 0 else math.inf
    report = CoareaReport(lhs, rhs, abs_err, rel_err, excluded, records)
    if excluded > EXCLUDED_BUDGET * (b - a):
        raise ExcludedSliceBudgetError(report, EXCLUDED_BUDGET * (b - a))
    return report
