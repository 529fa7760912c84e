import json
import math
from pathlib import Path

import pytest

from gmt import cli

SCENES = Path(__file__).resolve().parent.parent / "scenes"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_area_circle(capsys):
    code, out, err = run(capsys, "area", SCENES / "circle.json", "--tol", "1e-8")
    assert code == 0 and err == ""
    report = json.loads(out)
    assert report["value"] == pytest.approx(2 * math.pi, abs=1e-8)
    assert list(report) == ["value", "tol", "ambient_dim", "param_dim", "depth", "overlapping_charts", "charts"]
    assert report["overlapping_charts"] == []


def test_area_sphere(capsys):
    code, out, _ = run(capsys, "area", SCENES / "sphere.json", "--tol", "1e-6")
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(4 * math.pi, abs=1e-6)


def test_area_is_byte_deterministic(capsys, tmp_path):
    argv = ("area", SCENES / "two_circles.json", "--field", "x1^2 + x2", "--json-out", tmp_path / "r.json")
    first = run(capsys, *argv)[1]
    second = run(capsys, *argv)[1]
    assert first == second == (tmp_path / "r.json").read_text()


@pytest.mark.parametrize(
    "content",
    ["{not json", '{"charts": []}', '{"ambient_dim": 2, "charts": [{"param_dim": 1, "domain": [[0, 1]], "map": ["u1"]}]}',
     '{"ambient_dim": 2, "charts": [{"param_dim": 1, "domain": [[1, 0]], "map": ["u1", "0"]}]}',
     '{"ambient_dim": 2, "charts": [{"param_dim": 1, "domain": [[0, 1]], "map": ["u2", "0"]}]}'],
)
def test_area_malformed_scene(capsys, tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    code, out, err = run(capsys, "area", path)
    assert code == 1 and out == "" and err.startswith("error:")


def test_area_bad_field(capsys):
    code, _, err = run(capsys, "area", SCENES / "circle.json", "--field", "x3")
    assert code == 1 and "error" in err


def test_area_rank_deficient_is_numerical_failure(capsys, tmp_path):
    path = tmp_path / "point.json"
    path.write_text('{"ambient_dim": 2, "charts": [{"param_dim": 1, "domain": [[0, 1]], "map": ["1", "2"]}]}')
    assert run(capsys, "area", path)[0] == 2


def test_coarea_annulus(capsys, tmp_path):
    csv_path = tmp_path / "slices.csv"
    code, out, _ = run(
        capsys, "coarea", "--h", "sqrt(x1^2+x2^2)", "--a", 1, "--b", 2, "--res", 256, "--csv-out", csv_path
    )
    assert code == 0
    report = json.loads(out)
    assert report["rel_err"] < 0.01
    assert report["lhs"] == pytest.approx(3 * math.pi, rel=1e-2)
    assert report["rhs"] == pytest.approx(3 * math.pi, rel=1e-2)
    raw = csv_path.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"t,weight,value,status\n")


def test_coarea_fubini_case(capsys):
    code, out, _ = run(capsys, "coarea", "--h", "x1", "--a", 0, "--b", 1, "--box", "0,1", "--res", 32, "--slices", 8)
    assert code == 0
    assert json.loads(out)["rel_err"] < 1e-9


def test_coarea_precondition(capsys):
    assert run(capsys, "coarea", "--h", "x1", "--a", 2, "--b", 1)[0] == 1
    assert run(capsys, "coarea", "--h", "x1", "--a", 0, "--b", 1, "--dim", 4)[0] == 1
    assert run(capsys, "coarea", "--h", "x1 +", "--a", 0, "--b", 1)[0] == 1


def test_coarea_discrepancy_exit(capsys):
    code, out, _ = run(
        capsys, "coarea", "--h", "sqrt(x1^2+x2^2)", "--a", 1, "--b", 2, "--res", 8, "--max-rel-err", 1e-9
    )
    assert code == 3
    assert json.loads(out)["rel_err"] >= 1e-9


def test_coarea_excluded_budget_exit(capsys):
    code, out, err = run(
        capsys, "coarea", "--h", "1e-10*x1", "--a", 0, "--b", 1e-10, "--box", "0,1", "--res", 8, "--slices", 4
    )
    assert code == 4
    assert json.loads(out)["excluded_t_measure"] > 0
    assert err.startswith("error:")


def test_limit_study(capsys, tmp_path):
    csv_path = tmp_path / "gaps.csv"
    code, out, _ = run(
        capsys, "limit-study", SCENES / "shrinking_circles.json", "--k-max", 12, "--tol", 1e-10,
        "--gap-tol", 0.1, "--csv-out", csv_path,
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["limit_value"] == pytest.approx(2 * math.pi, abs=1e-9)
    for row in summary["rows"]:
        assert row["gap"] == pytest.approx(2 * math.pi / row["k"], abs=1e-6)
    assert summary["converged"] is True
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "k,I_k,gap" and len(lines) == 13


def test_limit_study_cubic_field(capsys):
    rows, _ = cli.run_limit_study(SCENES / "shrinking_circles.json", "x1^2 + x2^2", 5, 1e-10)
    for k, value, _ in rows:
        assert value == pytest.approx(2 * math.pi * (1 + 1 / k) ** 3, abs=1e-8)


def test_limit_study_zero_field():
    rows, summary = cli.run_limit_study(SCENES / "shrinking_circles.json", "0", 4, 1e-8)
    assert all(v == 0.0 and g == 0.0 for _, v, g in rows)
    assert summary["converged"] is True


def test_limit_study_validation(capsys):
    assert run(capsys, "limit-study", SCENES / "shrinking_circles.json", "--k-max", 1)[0] == 1
    assert run(capsys, "limit-study", SCENES / "circle.json")[0] == 1


def test_net(capsys, tmp_path):
    code, out, _ = run(capsys, "net", "--f", "x1", "--a", 0, "--b", 1, "--tol", 1e-10, "--json-out", tmp_path / "n.json")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "step,cells,sum,delta"
    assert float(lines[-1].split(",")[2]) == pytest.approx(0.5, abs=1e-10)
    assert json.loads((tmp_path / "n.json").read_text())["converged"] is True


def test_net_sine(capsys):
    code, out, _ = run(capsys, "net", "--f", "sin(x1)", "--a", 0, "--b", math.pi)
    assert code == 0
    assert float(out.splitlines()[-1].split(",")[2]) == pytest.approx(2.0, abs=1e-8)


def test_net_non_convergence(capsys):
    code, out, err = run(capsys, "net", "--f", "x1^2", "--a", 0, "--b", 1, "--max-steps", 1)
    assert code == 2
    assert out.startswith("step,cells,sum,delta\n")
    assert err.startswith("error:") and "step,cells" not in err


def test_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "net", "--f", "x1")[0] == 1
