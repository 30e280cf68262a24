import json

import pytest

from sts21td.cli import run
from sts21td.core import AG23, FANO, format_design, parse_designs


def test_catalog_sts9(tmp_path, capsys):
    out = tmp_path / "s9.txt"
    assert run(["catalog", "sts9", "--support", "0..8", "--with-block", "0,1,2", "--out", str(out)]) == 0
    assert len(parse_designs(out.read_text())) == 120
    assert run(["catalog", "sts9", "--count"]) == 0
    assert capsys.readouterr().out.strip() == "840"
    assert run(["catalog", "sts9", "--with-block", "0,1,2", "--with-block", "3,4,5",
                "--with-block", "6,7,8", "--count"]) == 0
    assert capsys.readouterr().out.strip() == "12"


def test_catalog_td36(capsys):
    assert run(["catalog", "td36"]) == 0
    out = capsys.readouterr().out
    assert len(parse_designs(out)) == 12


def test_canon_output(tmp_path, capsys):
    f = tmp_path / "d.txt"
    f.write_text(format_design(AG23) + format_design(FANO))
    assert run(["canon", str(f)]) == 0
    lines = capsys.readouterr().out.split()
    assert lines[1] == "aut=432" and lines[3] == "aut=168"
    assert len(lines[0]) == 16


def test_resolve(tmp_path, capsys):
    f = tmp_path / "ag.txt"
    f.write_text(format_design(AG23))
    assert run(["resolve", str(f)]) == 0
    out = capsys.readouterr().out
    assert out.count("class") == 4
    g = tmp_path / "fano.txt"
    g.write_text(format_design(FANO))
    assert run(["resolve", str(g)]) == 2


def test_usage_errors(tmp_path):
    assert run(["classify", "--mode", "bogus"]) == 2
    assert run(["classify", "--mode", "tau7", "--threads", "0"]) == 2
    assert run(["resolve", str(tmp_path / "missing.txt")]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["validate", "--in", str(tmp_path / "nope.jsonl"), "--stratum", "tau7"]) == 2


def test_classify_validate_report(tmp_path, capsys, monkeypatch):
    out = tmp_path / "t7.jsonl"
    monkeypatch.setenv("STS21TD_CHECKPOINT", str(tmp_path / "ck"))
    assert run(["classify", "--mode", "tau7", "--out", str(out)]) == 0
    rows = [json.loads(ln) for ln in out.read_text().splitlines()]
    assert len(rows) == 12
    assert set(rows[0]) == {"cert_hash", "tau6", "sigma9", "aut_order", "resolvable", "blocks"}
    assert (tmp_path / "ck" / "state.json").exists()
    assert run(["validate", "--in", str(out), "--stratum", "tau7"]) == 0
    assert run(["validate", "--in", str(out), "--stratum", "tau3plus"]) == 1
    capsys.readouterr()
    assert run(["report", "--in", str(out), "--check-theorems"]) == 0
    text = capsys.readouterr().out
    assert "12 (5)" in text
    # warm rerun from the checkpoint gives the same bytes
    again = tmp_path / "again.jsonl"
    assert run(["classify", "--mode", "tau7", "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_canon_hash_matches_record(tmp_path, capsys, tau7_run):
    rec = tau7_run.records[0]
    f = tmp_path / "r.txt"
    f.write_text(format_design(rec.system()))
    assert run(["canon", str(f)]) == 0
    h, aut = capsys.readouterr().out.split()
    assert h == rec.cert_hash and aut == f"aut={rec.aut_order}"
