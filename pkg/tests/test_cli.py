import json

import pytest
from conftest import DATA

from threadrefine.cli import EXIT_BUDGET, EXIT_FALSE, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_traces_match(capsys):
    code, out, _ = run(capsys, "check-traces", DATA / "opt.trc", DATA / "orig.trc", "--init", DATA / "zero.init")
    assert code == EXIT_OK and out.startswith("match")


def test_traces_mismatch_text(capsys):
    code, out, _ = run(capsys, "check-traces", DATA / "opt_bad.trc", DATA / "orig.trc")
    assert code == EXIT_FALSE
    assert "constraint 9 (state-unlock) at tuple 3, location x, values 2 vs 0" in out


def test_traces_mismatch_json_nested(capsys):
    code, out, _ = run(capsys, "check-traces", DATA / "opt_bad.trc", DATA / "orig.trc", "--nested", "--json")
    rep = json.loads(out)
    assert code == EXIT_FALSE and rep["constraint"] == 20 and rep["verdict"] == "mismatch"


def test_init_file_formats(tmp_path, capsys):
    f = tmp_path / "a.init"
    f.write_text("x=0\ninit y 0\n")
    code, _, _ = run(capsys, "check-traces", DATA / "opt.trc", DATA / "orig.trc", "--init", f)
    assert code == EXIT_OK


def test_threads_true(capsys):
    code, out, err = run(capsys, "check-threads", DATA / "opt.thr", DATA / "orig.thr")
    assert code == EXIT_OK and out.strip() == "true" and "explored" in err


@pytest.mark.parametrize("name", ["rm_roach.thr", "rm_inverse.thr"])
def test_threads_nested_true(capsys, name):
    code, out, _ = run(capsys, "check-threads", DATA / name, DATA / "rm_original.thr", "--nested")
    assert code == EXIT_OK


def test_threads_false_prints_certificate(capsys):
    code, out, _ = run(capsys, "check-threads", DATA / "rm_fresh.thr", DATA / "rm_original.thr")
    assert code == EXIT_FALSE
    assert out.startswith("false") and "race-odd-W" in out and "fresh" in out
    assert "certificate:" in out and "original trace:" in out


def test_threads_json(capsys):
    code, out, _ = run(capsys, "check-threads", DATA / "opt.thr", DATA / "orig.thr", "--json")
    assert code == EXIT_OK and json.loads(out)["verdict"] is True


def test_threads_budget(capsys):
    code, _, err = run(capsys, "check-threads", DATA / "opt.thr", DATA / "orig.thr", "--budget", "1")
    assert code == EXIT_BUDGET and "budget" in err


@pytest.mark.parametrize("det", ["hb", "adjacent"])
def test_race_scan_free(capsys, det):
    code, out, _ = run(capsys, "race-scan", DATA / "orig.thr", DATA / "ctx.thr", "--detector", det)
    assert code == EXIT_OK and out.startswith("race-free")


def test_race_scan_racy(capsys):
    code, out, _ = run(capsys, "race-scan", DATA / "writer1.thr", DATA / "writer2.thr")
    assert code == EXIT_FALSE and out.startswith("racy") and "initial state" in out


def test_missing_file(capsys):
    code, _, err = run(capsys, "check-traces", DATA / "nope.trc", DATA / "orig.trc")
    assert code == EXIT_USAGE and "threadrefine:" in err


def test_bad_usage(capsys):
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "check-threads", DATA / "opt.thr", DATA / "orig.thr", "--domain", "a,b")[0] == EXIT_USAGE


def test_syntax_error_is_usage(tmp_path, capsys):
    f = tmp_path / "bad.trc"
    f.write_text("lock m\nwrite x\n")
    assert run(capsys, "check-traces", f, DATA / "orig.trc")[0] == EXIT_USAGE


def test_gen_and_bench(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("seed=1\nlength=30-50\nlocks=2-3\npairs=3\nlabel=s\n")
    code, out, _ = run(capsys, "gen", cfg, "--out", tmp_path / "corpus")
    assert code == EXIT_OK and "wrote 3 pairs" in out
    assert len(list((tmp_path / "corpus").glob("*.trc"))) == 6

    code, out, err = run(capsys, "bench", cfg, "--out", tmp_path / "b.csv", "--oracle", "--repeats", "1")
    lines = [json.loads(line) for line in out.splitlines()]
    assert code == EXIT_OK and len(lines) == 3 and all(r["verdict"] == "match" for r in lines)
    assert "summary" in json.loads(err)
    assert (tmp_path / "b.csv.manifest.json").exists()


def test_bench_verdicts_only(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("seed=2\npairs=4\nbug=lock-edit\n")
    code, out, err = run(capsys, "bench", cfg, "--jobs", "2")
    assert code == EXIT_OK and len(out.splitlines()) == 4 and "0 disagreements" in err
