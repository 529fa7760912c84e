"""Command-line front end.

Exit codes: 0 ok, 1 parse/validation error, 2 numerical non-convergence,
3 coarea discrepancy above --max-rel-err, 4 too many critical slices.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import coarea
from .expr import ExprError, parse
from .geometry import Chart, ParamBox, RankDeficiencyError
from .measures import DisjointManifold, check_overlap, hausdorff_integrate_report
from .nets import NonConvergenceError, RefinementNet, net_limit
from .report import dumps

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONCONVERGENCE = 2
EXIT_DISCREPANCY = 3
EXIT_EXCLUDED = 4


class ValidationError(ValueError):
    pass


def _number(value, what: str) -> float:
    """A bound given as a number or a constant expression such as "2*pi"."""
    if isinstance(value, bool):
        raise ValidationError(f"{what}: expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(parse(value, 0).eval([]))
        except ExprError as err:
            raise ValidationError(f"{what}: {err}") from None
    raise ValidationError(f"{what}: expected a number or constant expression")


def chart_from_dict(d: dict, ambient_dim: int, where: str = "chart") -> Chart:
    try:
        param_dim = int(d["param_dim"])
        domain = [(_number(lo, f"{where} domain"), _number(hi, f"{where} domain")) for lo, hi in d["domain"]]
        maps = list(d["map"])
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ValidationError):
            raise
        raise ValidationError(f"{where}: malformed descriptor ({err})") from None
    if len(domain) != param_dim:
        raise ValidationError(f"{where}: domain has {len(domain)} axes, param_dim is {param_dim}")
    if len(maps) != ambient_dim:
        raise ValidationError(f"{where}: map has {len(maps)} components, ambient_dim is {ambient_dim}")
    try:
        return Chart(tuple(parse(s, param_dim, "u") for s in maps), ParamBox(tuple(domain)))
    except (ExprError, ValueError) as err:
        raise ValidationError(f"{where}: {err}") from None


def load_scene(path) -> DisjointManifold:
    """Read a scene file: {"ambient_dim": n, "charts": [{"param_dim", "domain", "map"}]}."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ValidationError(f"cannot read scene {path}: {err}") from None
    if not isinstance(data, dict) or "ambient_dim" not in data or "charts" not in data:
        raise ValidationError("scene needs 'ambient_dim' and 'charts'")
    n = data["ambient_dim"]
    if not isinstance(n, int) or n < 1:
        raise ValidationError("ambient_dim must be a positive integer")
    charts = [chart_from_dict(c, n, f"chart {k}") for k, c in enumerate(data["charts"])]
    try:
        return DisjointManifold(tuple(charts), n)
    except ValueError as err:
        raise ValidationError(str(err)) from None


@dataclass(frozen=True)
class CurveFamily:
    """Chart template with a free parameter ``k`` plus an explicit limit chart."""

    ambient_dim: int
    template: dict
    limit: dict

    def instance(self, k: int) -> Chart:
        def sub(text):
            if isinstance(text, str):
                return re.sub(r"\bk\b", f"({k})", text)
            return text

        d = {
            "param_dim": self.template["param_dim"],
            "domain": [[sub(lo), sub(hi)] for lo, hi in self.template["domain"]],
            "map": [sub(s) for s in self.template["map"]],
        }
        return chart_from_dict(d, self.ambient_dim, f"family member k={k}")

    def limit_chart(self) -> Chart:
        return chart_from_dict(self.limit, self.ambient_dim, "limit chart")


def load_family(path) -> CurveFamily:
    """{"ambient_dim": n, "template": <chart with k>, "limit": <chart>}"""
    try:
        data = json.loads(Path(path).read_text())
        family = CurveFamily(int(data["ambient_dim"]), dict(data["template"]), dict(data["limit"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"cannot read curve family {path}: {err}") from None
    family.limit_chart()
    family.instance(1)
    return family


# ---------------------------------------------------------------------------
# commands (pure functions returning report dicts; main() maps errors)


def run_area(scene_path, field: str, abs_tol: float) -> dict:
    M = load_scene(scene_path)
    try:
        f = parse(field, M.ambient_dim)
    except ExprError as err:
        raise ValidationError(f"field: {err}") from None
    overlaps = check_overlap(M)
    result = hausdorff_integrate_report(f, M, abs_tol)
    return {
        "value": result.value,
        "tol": abs_tol,
        "ambient_dim": M.ambient_dim,
        "param_dim": M.param_dim,
        "depth": result.depth,
        "overlapping_charts": [list(p) for p in overlaps],
        "charts": [
            {"value": c.value, "depth": c.depth, "cells": c.cells, "evaluations": c.evaluations}
            for c in result.charts
        ],
    }


def run_coarea(
    h: str,
    f: str,
    a: float,
    b: float,
    dim: int,
    res: int,
    n_slices: int,
    box: tuple[float, float] = (-3.0, 3.0),
    threads: int = 1,
) -> coarea.CoareaReport:
    if dim not in (2, 3):
        raise ValidationError("dim must be 2 or 3")
    if not a < b:
        raise ValidationError(f"need a < b, got a={a}, b={b}")
    if n_slices < 4:
        raise ValidationError("need at least 4 slices")
    try:
        H = coarea.ImplicitField(parse(h, dim))
        fe = parse(f, dim)
        grid = coarea.GridSpec.cube(box[0], box[1], res, dim)
    except (ExprError, ValueError) as err:
        raise ValidationError(str(err)) from None
    return coarea.coarea_check(fe, H, a, b, grid, n_slices, threads=threads)


def run_limit_study(
    family_path, field: str, k_max: int, abs_tol: float, gap_tol: Optional[float] = None
) -> tuple[list[tuple[int, float, float]], dict]:
    """I_k = int_{gamma_k} f dH for k = 1..k_max against I_inf on the limit chart.

    The run counts as converged when the last three gaps are nonincreasing
    and the final gap is below 10 * gap_tol (gap_tol defaults to abs_tol).
    """
    if k_max < 2:
        raise ValidationError("k_max must be at least 2")
    family = load_family(family_path)
    try:
        f = parse(field, family.ambient_dim)
    except ExprError as err:
        raise ValidationError(f"field: {err}") from None
    n = family.ambient_dim
    limit = hausdorff_integrate_report(f, DisjointManifold((family.limit_chart(),), n), abs_tol).value
    rows = []
    for k in range(1, k_max + 1):
        value = hausdorff_integrate_report(f, DisjointManifold((family.instance(k),), n), abs_tol).value
        rows.append((k, value, abs(value - limit)))
    gaps = [r[2] for r in rows]
    threshold = 10 * (abs_tol if gap_tol is None else gap_tol)
    tail = gaps[-3:]
    decreasing = len(tail) >= 2 and all(x >= y for x, y in zip(tail, tail[1:]))
    converged = decreasing and gaps[-1] < threshold
    summary = {
        "limit_value": limit,
        "k_max": k_max,
        "final_gap": gaps[-1],
        "gap_threshold": threshold,
        "converged": converged,
    }
    return rows, summary


def limit_study_csv(rows) -> str:
    lines = ["k,I_k,gap"]
    lines += [f"{k},{v:.17g},{g:.17g}" for k, v, g in rows]
    return "\n".join(lines) + "\n"


def run_net(f: str, a: float, b: float, tol: float, max_steps: int):
    if not a < b:
        raise ValidationError(f"need a < b, got a={a}, b={b}")
    try:
        fe = parse(f, 1)
    except ExprError as err:
        raise ValidationError(f"f: {err}") from None
    return net_limit(RefinementNet.bisection(a, b), fe, tol, max_steps)


# ---------------------------------------------------------------------------


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text, newline="\n")


def _emit_json(args, obj) -> None:
    text = dumps(obj) + "\n"
    sys.stdout.write(text)
    _write(args.json_out, text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-8, help="absolute tolerance")
    common.add_argument("--json-out", metavar="PATH", help="also write the JSON report here")
    common.add_argument("--csv-out", metavar="PATH", help="write the CSV table here")
    common.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")

    p = argparse.ArgumentParser(prog="gmt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    area = sub.add_parser("area", parents=[common], help="integrate a field over a chart scene")
    area.add_argument("scene", help="scene JSON file")
    area.add_argument("--field", default="1", help="integrand in x1..xn (default 1)")

    co = sub.add_parser("coarea", parents=[common], help="check the coarea identity")
    co.add_argument("--h", required=True, help="implicit function H in x1..xn")
    co.add_argument("--f", default="1", help="integrand (default 1)")
    co.add_argument("--a", type=float, required=True)
    co.add_argument("--b", type=float, required=True)
    co.add_argument("--dim", type=int, default=2)
    co.add_argument("--res", type=int, default=256, help="grid cells per axis")
    co.add_argument("--slices", type=int, default=64, help="Gauss-Legendre panels in t")
    co.add_argument("--box", default="-3,3", help="grid box lo,hi applied to every axis (write --box=-3,3 for negative lo)")
    co.add_argument("--max-rel-err", type=float, default=0.02)

    ls = sub.add_parser("limit-study", parents=[common], help="integrals over a curve family")
    ls.add_argument("family", help="curve family JSON file")
    ls.add_argument("--field", default="1")
    ls.add_argument("--k-max", type=int, default=20)
    ls.add_argument("--gap-tol", type=float, default=None, help="gap threshold (default --tol)")

    net = sub.add_parser("net", parents=[common], help="Riemann-sum net on [a, b]")
    net.add_argument("--f", required=True, help="integrand in x1")
    net.add_argument("--a", type=float, required=True)
    net.add_argument("--b", type=float, required=True)
    net.add_argument("--max-steps", type=int, default=40)
    return p


def _box(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"--box expects 'lo,hi', got {text!r}") from None
    return lo, hi


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (NonConvergenceError, RankDeficiencyError, ExprError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


def _dispatch(args) -> int:
    if args.command == "area":
        _emit_json(args, run_area(args.scene, args.field, args.tol))
        return EXIT_OK

    if args.command == "coarea":
        try:
            report = run_coarea(
                args.h, args.f, args.a, args.b, args.dim, args.res, args.slices,
                _box(args.box), args.threads,
            )
        except coarea.ExcludedSliceBudgetError as err:
            _emit_json(args, err.report.to_dict())
            _write(args.csv_out, err.report.to_csv())
            print(f"error: {err}", file=sys.stderr)
            return EXIT_EXCLUDED
        _emit_json(args, report.to_dict())
        _write(args.csv_out, report.to_csv())
        return EXIT_OK if report.rel_err < args.max_rel_err else EXIT_DISCREPANCY

    if args.command == "limit-study":
        rows, summary = run_limit_study(args.family, args.field, args.k_max, args.tol, args.gap_tol)
        table = limit_study_csv(rows)
        _write(args.csv_out, table)
        _emit_json(args, {**summary, "rows": [{"k": k, "value": v, "gap": g} for k, v, g in rows]})
        return EXIT_OK

    if args.command == "net":
        try:
            value, report = run_net(args.f, args.a, args.b, args.tol, args.max_steps)
        except NonConvergenceError as err:
            if err.report is not None:
                sys.stdout.write(err.report.to_csv())
                _write(args.csv_out, err.report.to_csv())
            print(f"error: {err}", file=sys.stderr)
            return EXIT_NONCONVERGENCE
        sys.stdout.write(report.to_csv())
        _write(args.csv_out, report.to_csv())
        if args.json_out:
            _write(args.json_out, dumps({"value": value, "steps": len(report.sums), "converged": True}) + "\n")
        return EXIT_OK

    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
