import json
import subprocess
import sys

import pytest

from lpgraph.cli import build_parser, inspect_summary, main, resolve_config, suite_jobs
from lpgraph.generators import generate, load


@pytest.fixture(autouse=True)
def _cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def test_spec_examples(tmp_path):
    out = tmp_path / "R"
    rc = main(["suite", "--graph", "torus:2x16:loop=1", "--check", "isometry", "--beta", "0.5",
               "--seed", "7", "--out", str(out)])
    assert rc == 0
    bundle = json.loads((out / "report.json").read_text())
    assert bundle["reports"][0]["check"] == "isometry"
    assert bundle["reports"][0]["status"] == "pass"
    assert main(["generate", "--graph", "cycle:2"]) == 2
    assert main(["suite", "--check", "isometry", "--seed", "1"]) == 2


@pytest.mark.parametrize("argv", [["suite", "--graph", "cycle:8", "--check", "isometry"],
                                  ["suite", "--graph", "cycle:8", "--seed", "1"],
                                  ["suite", "--graph", "cycle:8", "--seed", "1", "--check", "nope"],
                                  ["suite", "--bogus"], ["frobnicate"],
                                  ["functional", "--graph", "cycle:8"],
                                  ["suite", "--graph", "cycle:8:loop=0", "--check", "isometry",
                                   "--seed", "1"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().out == ""


def test_config_precedence(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"seed": 3, "trials": 9, "graph": ["cycle:8"]}))
    args = build_parser().parse_args(["suite", "--config", str(cfg_path), "--trials", "4"])
    cfg = resolve_config(args)
    assert cfg["seed"] == 3 and cfg["trials"] == 4 and cfg["graph"] == ["cycle:8"]
    assert cfg["growth"] == 1.1 and cfg["format"] == ["json"]
    cfg_path.write_text(json.dumps({"colour": 1}))
    assert main(["suite", "--config", str(cfg_path)]) == 2


def test_suite_jobs_grouping():
    args = build_parser().parse_args(
        ["suite", "--graph", "torus:2x8", "--graph", "torus:2x16", "--check", "norm-equiv",
         "--check", "kernel", "--seed", "5", "--p", "2,4", "--lmax", "50"])
    jobs = suite_jobs(resolve_config(args))
    assert [(c, a) for c, a, _ in jobs] == [("norm-equiv", (["torus:2x8", "torus:2x16"],)),
                                            ("kernel", ("torus:2x8",)), ("kernel", ("torus:2x16",))]
    assert jobs[0][2]["ps"] == [2.0, 4.0] and jobs[1][2]["L"] == 50


def test_config_file_written_and_report_merge(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["--graph", "torus:2x6:loop=1", "--seed", "1", "--trials", "3"]
    assert main(["suite", "--check", "isometry", "--beta", "0.5", "--out", str(a)] + base) == 0
    assert main(["suite", "--check", "cross-route", "--beta", "0.5", "--out", str(b)] + base) == 0
    eff = json.loads((a / "config.json").read_text())
    assert eff["command"] == "suite" and eff["seed"] == 1
    m = tmp_path / "m"
    assert main(["report", str(a), str(b / "report.json"), "--out", str(m),
                 "--format", "json,csv"]) == 0
    merged = json.loads((m / "report.json").read_text())
    assert [r["check"] for r in merged["reports"]] == ["cross-route", "isometry"]
    assert (m / "report.csv").read_text().startswith("check,graph,status,key,value")
    (tmp_path / "bad.json").write_text(json.dumps({"schema": "x/0", "reports": []}))
    assert main(["report", str(tmp_path / "bad.json"), "--out", str(m)]) == 2


def test_byte_identical_reruns(tmp_path):
    argv = ["suite", "--graph", "torus:2x6:loop=1", "--check", "isometry", "--check", "maximal",
            "--seed", "4", "--trials", "3", "--format", "json,csv"]
    assert main(argv + ["--out", str(tmp_path / "x")]) == 0
    assert main(argv + ["--out", str(tmp_path / "y"), "--jobs", "2"]) == 0
    for name in ("report.json", "report.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_inspect_matches_library(tmp_path, capsys):
    assert main(["inspect", "--graph", "torus:2x8:loop=1"]) == 0
    got = json.loads(capsys.readouterr().out)["torus:2x8:loop=1"]
    want = inspect_summary(generate("torus:2x8:loop=1"))
    assert got == pytest.approx(want)
    assert got["LB"] == pytest.approx(0.2)


def test_generate_roundtrip(tmp_path):
    assert main(["generate", "--graph", "cycle:9:loop=1", "--out", str(tmp_path / "g")]) == 0
    h = load(tmp_path / "g" / "cycle_9_loop=1.edges")
    assert (h.weights != generate("cycle:9:loop=1").weights).nnz == 0


def test_kernel_csv(tmp_path):
    out = tmp_path / "k"
    assert main(["kernel", "--graph", "cycle:5:loop=1", "--lmax", "3", "--source", "2",
                 "--out", str(out)]) == 0
    lines = (out / "kernel__cycle_5_loop=1__2.csv").read_text().splitlines()
    assert lines[0] == "l,y,p" and lines[1] == "0,2,0.3333333333333333"
    assert main(["kernel", "--graph", "cycle:5", "--source", "zz", "--out", str(out)]) == 2


def test_fit_and_functional(tmp_path):
    out = tmp_path / "f"
    assert main(["fit", "--graph", "torus:2x16:loop=1", "--lmax", "100", "--kind", "due,ue",
                 "--out", str(out), "--format", "json,plot"]) == 0
    bundle = json.loads((out / "report.json").read_text())
    assert {r["check"] for r in bundle["reports"]} == {"fit:due", "fit:ue"}
    assert any(p.suffix == ".dat" for p in (out / "plot").iterdir())
    out = tmp_path / "fn"
    assert main(["functional", "--graph", "torus:2x6:loop=1", "--functional", "g2", "--beta",
                 "0.7", "--p", "2", "--seed", "2", "--trials", "3", "--out", str(out)]) == 0
    r = json.loads((out / "report.json").read_text())["reports"][0]
    assert r["constants"]["ratios"]["2.0"]["max"] == pytest.approx(1.0, abs=1e-8)
    assert main(["functional", "--graph", "cycle:8", "--functional", "h", "--seed", "1",
                 "--out", str(out)]) == 2


def test_failing_suite_exits_1(tmp_path):
    rc = main(["suite", "--graph", "torus:2x6:loop=1", "--graph", "torus:2x8:loop=1",
               "--check", "norm-equiv", "--p", "2", "--growth", "0.5", "--trials", "3",
               "--seed", "1", "--out", str(tmp_path / "z")])
    assert rc == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lpgraph", "generate", "--graph", "path:1"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and r.stdout == "" and "path" in r.stderr
