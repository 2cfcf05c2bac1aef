import csv
import io
import json

import pytest

from lacekit import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_kernel_writes_manifest(tmp_path, capsys):
    m = tmp_path / "k.json"
    code, out, _ = run(["kernel", "--L", "1", "--d", "2", "--manifest", str(m)], capsys)
    assert code == cli.EXIT_OK
    doc = json.loads(m.read_text())
    assert {"command", "config", "versions", "started", "wall_time", "checks", "artifacts", "status"} <= set(doc)
    assert doc["status"] == "pass"


def test_usage_errors(tmp_path, capsys):
    assert run(["perc-mc", "--L", "1", "--d", "2", "--side", "8", "--p", "0.5"], capsys)[0] == cli.EXIT_USAGE
    assert run(["no-such-command"], capsys)[0] == cli.EXIT_USAGE
    assert run(["greens", "--L", "1", "--d", "2", "--mu", "1", "--side", "8"], capsys)[0] == cli.EXIT_USAGE


def test_config_schema(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"command": "enumerate", "L": 1, "d": 1, "model": "saw", "order": 3}))
    assert run(["enumerate", "--config", str(good)], capsys)[0] == cli.EXIT_OK
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"L": 1, "d": 1, "colour": "red"}))
    assert run(["enumerate", "--config", str(bad)], capsys)[0] == cli.EXIT_USAGE
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"command": "greens"}))
    assert run(["enumerate", "--config", str(wrong)], capsys)[0] == cli.EXIT_USAGE


def test_guard_exit(capsys):
    code, _, err = run(["perc-exact", "verify", "--builtin", "box", "--N", "1", "--budget", "1000"], capsys)
    assert code == cli.EXIT_GUARD
    assert json.loads(err.strip().splitlines()[-1])["error"] == "guard"


def test_perc_exact_single_bond(capsys):
    assert run(["perc-exact", "verify", "--builtin", "single-bond", "--N", "1"], capsys)[0] == cli.EXIT_OK


def test_enumerate_then_expand_verify(tmp_path, capsys):
    s = tmp_path / "s.json"
    assert run(["enumerate", "--L", "1", "--d", "2", "--order", "3", "--out", str(s)], capsys)[0] == 0
    assert run(["expand-verify", "--series", str(s)], capsys)[0] == 0


def test_perc_mc_field_roundtrip(tmp_path, capsys):
    out = tmp_path / "tau.csv"
    code, _, _ = run(["perc-mc", "--L", "1", "--d", "2", "--side", "8", "--p", "0.8", "--trials", "200",
                      "--seed", "4", "--out", str(out)], capsys)
    assert code in (cli.EXIT_OK, cli.EXIT_CHECK)
    f = cli.read_field_csv(out)
    assert f[(0, 0)] == 1.0 and f.torus.side == 8


def test_report_mixed_and_empty(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"command": "x", "checks": [cli.check("m", "ok1", True, 1, 0)]}))
    b.write_text(json.dumps({"command": "y", "checks": [cli.check("m", "bad", False, {"v": 2}, [0, 1])]}))
    code, out, _ = run(["report", str(a), str(b)], capsys)
    assert code == cli.EXIT_CHECK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == list(cli.REPORT_COLUMNS)
    assert [r[3] for r in rows[1:]] == ["pass", "fail"]
    assert json.loads(rows[2][4]) == {"v": 2}
    code, out, _ = run(["report"], capsys)
    assert code == cli.EXIT_OK and out.strip() == ",".join(cli.REPORT_COLUMNS)
    broken = tmp_path / "c.json"
    broken.write_text(json.dumps({"checks": []}))
    assert run(["report", str(broken)], capsys)[0] == cli.EXIT_USAGE


def test_laces_selfcheck_needs_seed(capsys):
    assert run(["laces", "selfcheck"], capsys)[0] == cli.EXIT_USAGE
    assert run(["laces", "selfcheck", "--max-b", "5", "--trials", "20", "--seed", "1"], capsys)[0] == cli.EXIT_OK


def test_diagrams_conditions(capsys):
    code, out, _ = run(["diagrams", "--kind", "conditions", "--q", "2.9", "--d", "3", "--side", "32"], capsys)
    assert code == cli.EXIT_OK
