import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from pqharmonic.cli import main

DATA = Path(__file__).parent / "data"


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(args, capsys):
    code, out, err = run(list(args) + ["--json"], capsys)
    return code, (json.loads(out) if out else None), err


def test_eval_cylinder(capsys):
    code, rep, _ = run_json(["eval", "cylinder", "-p", "3", "-q", "2", "--at", "1,1,0"], capsys)
    assert code == 0 and rep["status"] == "pass"
    assert rep["values"]["W"] == pytest.approx([2 ** 0.5, 0.0], rel=1e-11)
    assert max(abs(v) for v in rep["values"]["pq_tension"]) <= 1e-10
    assert {"|dphi|^2", "tension", "p_tension", "W", "pq_tension"} <= set(rep["values"])


def test_eval_power(capsys):
    code, rep, _ = run_json(["eval", "power", "-s", "4", "-p", "2", "-q", "2", "--at", "1,0"], capsys)
    assert code == 0
    assert rep["values"]["pq_tension"] == pytest.approx([-24.0, 0.0], rel=1e-12)


def test_eval_identity(capsys):
    code, rep, _ = run_json(["eval", "identity", "--at", "0.3,-0.2,0.5"], capsys)
    assert code == 0
    assert all(v == 0 for key in ("tension", "p_tension", "W", "pq_tension") for v in rep["values"][key])


def test_eval_text_output(capsys):
    code, out, _ = run(["eval", "cylinder", "-p", "3", "--at", "1,1,0"], capsys)
    assert code == 0 and "status: PASS" in out and "pq_tension" in out


def test_eval_problem_file_uses_its_params(capsys):
    code, rep, _ = run_json(["eval", "--problem", DATA / "cylinder.ini", "--at", "1,1,0"], capsys)
    assert code == 0 and rep["params"]["p"] == 3.0
    assert rep["values"]["W"] == pytest.approx([2 ** 0.5, 0.0], rel=1e-11)


def test_verify_cylinder(capsys):
    code, rep, _ = run_json(["verify", "cylinder", "--points", "4"], capsys)
    assert code == 0
    names = [c["name"] for c in rep["checks"]]
    assert any("p=3 q=2: W" in n for n in names) and any("bi-p-tension" in n for n in names)


def test_verify_hyperbolic_skips_p4(capsys):
    code, rep, _ = run_json(["verify", "hyperbolic", "--grid-p", "4,5", "--grid-q", "2", "--points", "3"], capsys)
    assert code == 0
    skips = [c for c in rep["checks"] if c["status"] == "skip"]
    assert len(skips) == 1 and skips[0]["note"] == "p>4 required"


def test_verify_all(capsys):
    code, rep, _ = run_json(["verify", "all", "--points", "3"], capsys)
    assert code == 0 and rep["status"] == "pass" and len(rep["checks"]) > 100


def test_variation_power(capsys):
    code, rep, _ = run_json(["variation", "power", "-s", "4", "--box", "0.5,-0.5:2,0.5"], capsys)
    assert code == 0
    (check,) = rep["checks"]
    assert check["rel_error"] <= 1e-4 and check["tolerance"] == 1e-4


def test_variation_cylinder_both_sides_vanish(capsys):
    code, rep, _ = run_json(["variation", "cylinder", "--bump", "1,1,0:0.3:2e-4,1e-4"], capsys)
    assert code == 0
    assert abs(rep["values"]["pairing"]) <= 1e-12 and abs(rep["values"]["fd"]) <= 1e-8


def test_variation_zero_bump(capsys):
    code, rep, _ = run_json(["variation", "power", "--zero-bump"], capsys)
    assert code == 0 and rep["values"]["fd"] == 0 and rep["values"]["pairing"] == 0


def test_scan_roots_and_csv(capsys, tmp_path):
    out = tmp_path / "scan.csv"
    code, rep, _ = run_json(["scan", "-p", "3", "-q", "2", "--interval", "1.1,2", "--samples", "256", "--csv", out], capsys)
    assert code == 0
    assert rep["values"]["roots"] == pytest.approx([1.5, 5 / 3], abs=1e-6)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["s", "tau_pq_u_at_probe"] and len(rows) == 257
    assert float(rows[1][0]) == 1.1


def test_scan_empty_interval(capsys):
    code, rep, _ = run_json(["scan", "-p", "2", "-q", "2", "--interval", "3.5,4"], capsys)
    assert code == 0 and rep["values"]["roots"] == []


def test_report_round_trip(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, _, _ = run(["eval", "cylinder", "-p", "3", "--at", "1,1,0", "--out", path], capsys)
    assert code == 0
    code, out, _ = run(["report", path, "--json"], capsys)
    assert code == 0 and out == path.read_text()


@pytest.mark.parametrize(
    "args,code",
    [
        (["eval", "hyperbolic", "-p", "4", "--at", "0,0,0,1"], 2),
        (["eval", "cylinder", "-p", "1", "--at", "1,1,0"], 2),
        (["eval", "bogus", "--at", "1"], 2),
        (["eval", "cylinder", "--at", "1,x"], 2),
        (["eval", "cylinder", "--at", "0,0,0"], 5),
        (["eval", "power", "-s", "2", "--at=-1,0"], 5),
        (["eval", "identity", "-p", "3", "--at", "1,1", "--order", "0"], 2),
        (["scan", "--interval", "0.5,1.5"], 2),
        (["variation", "power", "--bump", "0.6,0:0.3:1,0"], 5),
        (["variation", "--problem", DATA / "cylinder.ini"], 2),
        (["report", "/nonexistent/report.json"], 4),
        (["scan", "--csv", "/nonexistent/dir/out.csv"], 4),
    ],
)
def test_exit_codes(args, code, capsys):
    got, _, err = run(args, capsys)
    assert got == code
    if code != 2 or args[0] != "eval" or args[1] != "bogus":
        assert err


def test_degenerate_point_exit_code(capsys, tmp_path):
    flat = tmp_path / "const.ini"
    flat.write_text("[metric.source]\nvars = x, y\n[metric.target]\nvars = u\n[map]\nu = 1 + 0*x\n")
    code, _, err = run(["eval", "--problem", flat, "-p", "3", "--at", "0.2,0.3"], capsys)
    assert code == 3 and "error" in err


def test_failing_check_exit_code(capsys, tmp_path):
    good = tmp_path / "good.json"
    assert run(["eval", "cylinder", "-p", "3", "--at", "1,1,0", "--out", good], capsys)[0] == 0
    data = json.loads(good.read_text())
    data["checks"][0]["status"] = "fail"
    data["status"] = "fail"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert run(["report", bad], capsys)[0] == 1


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "pqharmonic.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "pqharmonic" in res.stdout
