from __future__ import annotations

import json

import pytest

from nilprod.cli import main
from nilprod.fixtures import WITNESS_D3_PRODUCT


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_verify_fixture(capsys):
    code, rep = run_json(capsys, "nilchain", "verify", "--fixtures", "paper-d3")
    assert code == 0
    assert rep["schema_version"] == 1
    assert rep["claim"]["tag"] == "witness-d3"
    res = rep["result"]
    assert res["is_nil_chain"] is True and res["product_nonzero"] is True
    assert res["product"] == [[str(x) for x in r] for r in WITNESS_D3_PRODUCT]


def test_verify_alias_and_exhaustive(capsys):
    code, rep = run_json(capsys, "verify", "--d", "2", "--n", "2", "--field", "gf2", "--mode", "exhaustive")
    assert code == 0
    assert rep["result"]["outcome"] == "exhausted"
    assert rep["result"]["counters"]["witnesses"] == 0


def test_search_reports_witness_strings(capsys):
    code, rep = run_json(capsys, "nilchain", "search", "--d", "3", "--n", "4", "--field", "q", "--budget", "2000")
    assert code == 0
    res = rep["result"]
    assert res["outcome"] == "witness" and res["strategy"] == "random-restart"
    for m in res["witness"]["matrices"]:
        assert all(isinstance(x, str) for row in m for x in row)


def test_search_length_five_is_clean(capsys):
    code, rep = run_json(capsys, "nilchain", "search", "--d", "3", "--n", "5", "--field", "gf3", "--budget", "3000")
    assert code == 0 and rep["result"]["counters"]["witnesses"] == 0


def test_certify(tmp_path, capsys):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"modulus": None, "matrices": [[[0, 1, 0], [0, 0, 1], [0, 0, 0]]] * 9}))
    code, rep = run_json(capsys, "nilchain", "certify", "--input", str(path))
    assert code == 0
    assert rep["result"]["final_rank"] == 0


def test_certify_rejects_non_member(tmp_path, capsys):
    path = tmp_path / "t.json"
    path.write_text(json.dumps([[[1, 0], [0, 1]], [[1, 0], [0, 1]]]))
    code, _ = run(capsys, "nilchain", "certify", "--input", str(path))
    assert code == 1


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('[[1, 2],\n [3, ]]')
    code = main(["jsr", "bounds", "--matrices", str(path)])
    err = capsys.readouterr().err
    assert code == 1
    assert f"{path}:2:" in err


def test_jsr_bounds_singleton(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps([[[1.0, 2.0], [0.5, -1.0]]]))
    code, rep = run_json(capsys, "jsr", "bounds", "--matrices", str(path), "--depth", "5")
    assert code == 0
    res = rep["result"]
    assert abs(res["best_upper"] - res["best_lower"]) < 1e-6
    assert abs(res["best_lower"] - 2**0.5) < 1e-6


def test_jsr_probe_csv_and_json(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _ = run(capsys, "jsr", "probe", "--d", "2", "--n", "2", "--samples", "50", "--format", "csv", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sample_id,L_raw,L_norm,R,length,ensemble"
    assert len(lines) == 51
    code, rep = run_json(capsys, "jsr", "probe", "--d", "2", "--n", "2", "--samples", "50", "--format", "json")
    env = rep["result"]
    assert env["violations"] == []
    assert "delta" in env["envelope"] and "C" in env["envelope"]


def test_cocycle_lyapunov_csv(capsys):
    code, out = run(capsys, "cocycle", "lyapunov", "--seeds", "2", "--n", "100", "--stride", "50", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "seed,n,lognorm,logradius"
    assert len(lines) == 1 + 2 * 2


def test_cocycle_lyapunov_json(capsys):
    code, rep = run_json(capsys, "cocycle", "lyapunov", "--seeds", "4", "--n", "200", "--checkpoints", "100", "200")
    assert code == 0
    assert rep["claim"]["tag"] == "berger-wang-cocycle"
    assert set(rep["result"]["quantiles"]) == {"100", "200"}


def test_cocycle_flat(capsys):
    code, rep = run_json(capsys, "cocycle", "flat", "--a", "1", "--theta", "0", "--n", "10")
    assert code == 0
    code, out = run(capsys, "cocycle", "flat", "--a", "1", "--theta", "1/7", "--n", "6", "--stride", "1", "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert float(rows[2][2]) == pytest.approx(3.0)


def test_cocycle_recurrence(capsys):
    code, rep = run_json(capsys, "cocycle", "recurrence", "--seeds", "5", "--n-probe", "500")
    assert code == 0
    assert rep["claim"]["tag"] == "recurrence"


def test_usage_errors(capsys):
    assert main(["nilchain", "frobnicate"]) == 1
    assert main(["verify", "--d", "3", "--n", "5", "--field", "gf3", "--mode", "exhaustive"]) == 1
    assert main(["verify", "--field", "reals"]) == 1
    assert main(["jsr", "bounds", "--matrices", "/nonexistent/file.json"]) == 1
    capsys.readouterr()


def test_unwritable_output(capsys):
    assert main(["verify", "--fixtures", "paper-d3", "--out", "/nonexistent/dir/r.json"]) == 1
    capsys.readouterr()


def test_env_override(monkeypatch, capsys):
    monkeypatch.setenv("NILPROD_SEED", "17")
    code, rep = run_json(capsys, "jsr", "probe", "--d", "2", "--n", "2", "--samples", "20", "--format", "json")
    assert rep["config"]["seed"] == 17
    code, rep = run_json(capsys, "jsr", "probe", "--d", "2", "--n", "2", "--samples", "20", "--format", "json", "--seed", "3")
    assert rep["config"]["seed"] == 3


def test_reports_are_byte_identical_across_workers(capsys):
    argv = ["nilchain", "search", "--d", "3", "--n", "5", "--field", "gf3", "--budget", "4000", "--seed", "9"]
    _, a = run(capsys, *argv, "--workers", "1")
    _, b = run(capsys, *argv, "--workers", "2")
    assert a == b
    argv = ["jsr", "probe", "--d", "3", "--n", "5", "--samples", "300", "--seed", "4"]
    _, a = run(capsys, *argv, "--workers", "1")
    _, b = run(capsys, *argv, "--workers", "2")
    assert a == b
