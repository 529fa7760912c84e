import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmt.expr import parse
from gmt.extended import INF
from gmt.nets import (
    NonConvergenceError,
    RefinementNet,
    TaggedPartition,
    monotone_net_limit,
    net_limit,
    refine,
    riemann_sum,
)

x = parse("x1", 1)


def test_partition_validation():
    with pytest.raises(ValueError):
        TaggedPartition([0.0, 0.0, 1.0], [0.0, 0.5])
    with pytest.raises(ValueError):
        TaggedPartition([0.0, 1.0], [1.5])
    with pytest.raises(ValueError):
        TaggedPartition([0.0, 1.0], [0.2, 0.3])


def test_riemann_sum_of_one():
    p = TaggedPartition([0.0, 0.1, 0.35, 0.9, 1.0], [0.0, 0.2, 0.9, 1.0])
    assert riemann_sum(parse("1", 1), p) == pytest.approx(1.0, abs=1e-15)


def test_left_sum_example():
    p = TaggedPartition.uniform(0, 1, 4, tag="left")
    assert riemann_sum(x, p) == 0.375


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 100, 1000])
def test_midpoint_is_exact_for_linear(n):
    assert riemann_sum(x, TaggedPartition.uniform(0, 1, n)) == pytest.approx(0.5, abs=1e-15)


def test_refine_examples():
    p = refine(TaggedPartition([0.0, 1.0], [0.3]))
    np.testing.assert_array_equal(p.points, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(p.tags, [0.25, 0.75])
    q = TaggedPartition([0.0, 0.2, 0.7, 1.0], [0.1, 0.2, 0.8])
    assert refine(q).cells == 6
    r1 = refine(q)
    r2 = refine(r1)
    assert r2.refines(r1) and r1.refines(q) and r2.refines(q)
    assert not q.refines(r1)


@pytest.mark.parametrize("a, b, cells", [(0, 1, 1), (-1, 3, 4), (0.5, 2.5, 8)])
def test_mesh_halves_exactly(a, b, cells):
    p = TaggedPartition.uniform(a, b, cells)
    for _ in range(12):
        nxt = refine(p)
        assert nxt.mesh == p.mesh / 2
        p = nxt


def test_mesh_halves_nondyadic():
    p = TaggedPartition.uniform(-1, 3, 3)
    for _ in range(12):
        nxt = refine(p)
        assert nxt.mesh == pytest.approx(p.mesh / 2, rel=1e-14)
        p = nxt


def test_net_limit_examples():
    value, report = net_limit(RefinementNet.bisection(0, 1), x, 1e-10, 40)
    assert value == pytest.approx(0.5, abs=1e-10)
    value, _ = net_limit(RefinementNet.bisection(0, 1), parse("x1^2", 1), 1e-8, 40)
    assert value == pytest.approx(1 / 3, abs=1e-8)
    value, report = net_limit(RefinementNet.bisection(0, math.pi), parse("sin(x1)", 1), 1e-8, 40)
    assert value == pytest.approx(2.0, abs=1e-8)
    assert report.converged
    assert report.cells == [2**k for k in range(len(report.cells))]


def test_net_limit_non_convergence_carries_report():
    with pytest.raises(NonConvergenceError) as info:
        net_limit(RefinementNet.bisection(0, 1), parse("x1^2", 1), 1e-12, 3)
    assert len(info.value.report.sums) == 3


def test_report_csv():
    _, report = net_limit(RefinementNet.bisection(0, 1), parse("x1^2", 1), 1e-3, 40)
    lines = report.to_csv().splitlines()
    assert lines[0] == "step,cells,sum,delta"
    assert lines[1].startswith("0,1,0.25,")
    assert len(lines) == len(report.sums) + 1


def antiderivative(coefs, t):
    return sum(c * t ** (k + 1) / (k + 1) for k, c in enumerate(coefs))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=6))
def test_polynomials_match_antiderivative(coefs):
    f = parse(" + ".join(f"({c})*x1^{k}" for k, c in enumerate(coefs)), 1)
    tol = 1e-8
    value, _ = net_limit(RefinementNet.bisection(0, 1), f, tol, 40)
    assert value == pytest.approx(antiderivative(coefs, 1.0), abs=tol)


@pytest.mark.parametrize("source", ["x1", "x1^2", "exp(x1)", "sqrt(x1)", "x1^3 + x1"])
def test_monotone_sandwich(source):
    f = parse(source, 1)
    tol = 1e-4
    left, right = [], []
    p_left = TaggedPartition.uniform(0, 1, 1, "left")
    p_right = TaggedPartition.uniform(0, 1, 1, "right")
    for _ in range(22):
        left.append(riemann_sum(f, p_left))
        right.append(riemann_sum(f, p_right))
        if right[-1] - left[-1] < tol:
            break
        p_left, p_right = refine(p_left, "left"), refine(p_right, "right")
    assert all(a <= b for a, b in zip(left, left[1:]))
    assert all(a >= b for a, b in zip(right, right[1:]))
    assert abs(right[-1] - left[-1]) < 2 * tol
    assert monotone_net_limit(left) == left[-1]


def test_monotone_net_limit_examples():
    chain = [1 - 2.0**-k for k in range(1, 21)]
    assert monotone_net_limit(chain) == 1 - 2.0**-20
    assert monotone_net_limit([3.5] * 5) == 3.5
    assert monotone_net_limit(list(range(1, 21)), bound=10) is INF
    assert monotone_net_limit([1.0, 2.0], unbounded=True) is INF
    with pytest.raises(ValueError):
        monotone_net_limit([1.0, 0.5])
