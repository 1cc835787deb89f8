import json
import subprocess
import sys

import pytest

from clique_mosaic.cli import run
from clique_mosaic.core import CliqueDecomposition, MultipartiteGraph, verify_decomposition


@pytest.fixture
def k333(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(MultipartiteGraph.complete(3, 3).dumps())
    return p


def load(path):
    return json.loads(path.read_text())


def test_check(k333, tmp_path):
    out = tmp_path / "o.json"
    assert run(["check", str(k333), "--out", str(out)]) == 0
    d = load(out)
    assert d["divisible"] is True and d["hat_delta"] == 3


def test_decompose_then_verify(k333, tmp_path):
    out = tmp_path / "d.json"
    assert run(["decompose", str(k333), "--mode", "exact", "--out", str(out)]) == 0
    d = CliqueDecomposition.from_dict(load(out))
    assert verify_decomposition(MultipartiteGraph.complete(3, 3), d)
    vout = tmp_path / "v.json"
    assert run(["verify", str(k333), str(out), "--out", str(vout)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cliques": d.to_dict()["cliques"][1:]}))
    assert run(["verify", "--input", str(k333), "--decomposition", str(bad), "--out", str(vout)]) == 1


def test_decompose_pipeline_report(k333, tmp_path):
    rep = tmp_path / "r.json"
    out = tmp_path / "d.json"
    assert run(["decompose", str(k333), "--mode", "pipeline", "--out", str(out), "--report", str(rep)]) == 0
    man = load(rep)["manifest"]
    assert man["command"] == "decompose" and man["input_hashes"]
    assert load(out)["route"] in ("pipeline", "fallback")


def test_extremal_and_fractional(tmp_path):
    g = tmp_path / "g.json"
    assert run(["gen-extremal", "--m", "2", "--out", str(g)]) == 0
    out = tmp_path / "f.json"
    assert run(["fractional", str(g), "--out", str(out)]) == 1
    assert load(out)["status"] == "infeasible"
    assert run(["decompose", str(g), "--mode", "exact", "--out", str(out)]) == 1


def test_complete_latin(tmp_path):
    p = tmp_path / "grid.txt"
    p.write_text("1,.,.\n.,.,.\n.,.,3\n")
    out = tmp_path / "done.txt"
    assert run(["complete-latin", str(p), "--out", str(out)]) == 0
    rows = [list(map(int, ln.split(","))) for ln in out.read_text().split()]
    assert rows[0][0] == 1 and rows[2][2] == 3
    assert all(sorted(r) == [1, 2, 3] for r in rows)


def test_gadget_and_fix(tmp_path, k333):
    tri = tmp_path / "t.json"
    tri.write_text(MultipartiteGraph(3, 1, [(0, 1), (0, 2), (1, 2)]).dumps())
    out = tmp_path / "a.json"
    assert run(["gadget", str(tri), "--min-s", "--out", str(out)]) == 0
    assert run(["gadget", "--kind", "mh", "--r", "3", "--out", str(out)]) == 0
    assert run(["fix-divisibility", str(k333), "--out", str(out)]) in (0, 1)


def test_scan_runs(tmp_path):
    out = tmp_path / "s.json"
    assert run(["scan", "--n", "4", "--samples", "4", "--out", str(out)]) == 0
    d = load(out)
    assert d["rows"] and all(0 <= r["rate"] <= 1 for r in d["rows"])


def test_usage_errors(tmp_path):
    assert run([]) == 2
    assert run(["check"]) == 2
    assert run(["check", str(tmp_path / "missing.json")]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert run(["check", str(junk)]) == 2


def test_module_entry_point(k333):
    res = subprocess.run([sys.executable, "-m", "clique_mosaic", "check", str(k333)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)
