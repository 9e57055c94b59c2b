import json
import math
import shutil
import subprocess
from fractions import Fraction

import pytest

from horohopf import cli
from horohopf import classifier as cl
from horohopf import ergodic as eg


def run(tmp_path, command, config=None, *flags, name="out"):
    out = tmp_path / name
    argv = [command, "--out", str(out), *flags]
    if config is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv), out


def bodies(path):
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["record"] == "header"
    return header, [json.loads(x) for x in lines[1:]]


def test_fold_prints_graph(tmp_path, capsys):
    code, out = run(tmp_path, "fold", {"generators": ["aa", "ab"]})
    assert code == 0
    expected = "# stallings k=2 vertices=2 base=0\n0 a 1\n1 a 0\n1 b 0\n"
    assert capsys.readouterr().out == expected
    assert (out / "graph.txt").read_text() == expected


def test_classify_explicit_rays(tmp_path):
    cfg = {"group": {"rank": 2, "generators": ["a"]}, "rays": ["(a)", "b(a)", "(ab)"]}
    code, out = run(tmp_path, "classify", cfg)
    assert code == 0
    header, recs = bodies(out / "verdicts.jsonl")
    assert header["command"] == "classify"
    assert [r["label"] for r in recs] == ["conservative", "dissipative", "dissipative"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary == {"conservative": 1, "dissipative": 2, "inconclusive": 0, "points": 3}
    assert (out / "occupancy.csv").read_text().startswith("ray,t,R,count")


def test_series_exact_partials(tmp_path):
    cfg = {"group": {"rank": 2, "generators": ["a"]}, "rays": ["(a)"], "params": {"radius_schedule": [0, 1, 2]}}
    code, out = run(tmp_path, "series", cfg)
    assert code == 0
    _, recs = bodies(out / "series.jsonl")
    assert Fraction(recs[0]["partials"][-1]) == Fraction(121, 9)


def test_resolved_config_and_radius_max(tmp_path):
    code, out = run(tmp_path, "classify", {"rays": ["(a)"]}, "--radius-max", "12", "--seed", "5")
    assert code == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["params"]["radius_schedule"] == [5, 10, 12]
    assert resolved["seed"] == 5
    assert set(resolved["params"]) >= {"thresholds", "growth_window", "cauchy_eps"}


def _mass_config():
    return {"group": {"rank": 2, "generators": ["aa", "ab", "aB"]}, "params": {"sample_count": 40}}


def test_hopf_mass_independent_of_workers_and_replayable(tmp_path):
    results = []
    for w in (1, 4):
        code, out = run(tmp_path, "hopf-mass", _mass_config(), "--workers", str(w), "--seed", "7", name=f"w{w}")
        assert code == 0
        results.append(bodies(out / "samples.jsonl"))
    assert results[0][1] == results[1][1]
    assert results[0][0]["config_sha256"] == results[1][0]["config_sha256"]
    mass = json.loads((tmp_path / "w1" / "mass.json").read_text())
    assert mass["fraction"] == 1.0 and mass["samples"] == 40

    replay = tmp_path / "replay"
    resolved = json.loads((tmp_path / "w1" / "resolved_config.json").read_text())
    resolved["out"] = str(replay)
    cfg_path = tmp_path / "replay.json"
    cfg_path.write_text(json.dumps(resolved))
    assert cli.main(["hopf-mass", "--config", str(cfg_path)]) == 0
    header, recs = bodies(replay / "samples.jsonl")
    assert recs == results[0][1]
    assert header["config_sha256"] == results[0][0]["config_sha256"]


def test_delta_check(tmp_path):
    code, out = run(tmp_path, "delta-check", {"sample_size": 30})
    assert code == 0
    assert Fraction(json.loads((out / "delta.json").read_text())["estimate"]) == 0
    code, out = run(tmp_path, "delta-check", {"model": "disk", "group": {"preset": "lattice-psl2z"}}, name="disk")
    rep = json.loads((out / "delta.json").read_text())
    assert code == 0 and rep["within_bound"] and rep["estimate"] <= math.log(2) + 1e-9


def test_audit_stream(tmp_path):
    code, out = run(tmp_path, "audit-stream", {"pairs": 300})
    rep = json.loads((out / "audit.json").read_text())
    assert code == 0 and rep["max_deviation"] == 0 and rep["exact"]
    cfg = {"model": "disk", "group": {"preset": "schottky"}, "stream": {"reweight_seed": 3}, "radius": 20, "pairs": 300}
    code, out = run(tmp_path, "audit-stream", cfg, name="disk")
    rep = json.loads((out / "audit.json").read_text())
    assert code == 0 and rep["max_deviation"] <= math.log(4) + 1e-9


def test_ergodic_lab(tmp_path):
    code, out = run(tmp_path, "ergodic-lab", {"battery": "canonical", "reweight_seeds": [1]})
    assert code == 0
    summary = json.loads((out / "partition.json").read_text())
    assert all(e["all_passed"] for e in summary)
    assert all(all(e["reweighted_agree"].values()) for e in summary)
    assert (out / "orbits.csv").exists()


# -- exit codes ------------------------------------------------------------------


@pytest.mark.parametrize(
    "command,config",
    [
        ("classify", {"colour": 1}),
        ("classify", {"params": {"radius_schedule": [5, 4, 3]}}),
        ("classify", {"params": {"bogus": 1}}),
        ("classify", {"rays": ["(aA)"]}),
        ("classify", {"rays": ["(c)"]}),
        ("fold", {"generators": ["ax"]}),
        ("delta-check", {"model": "sphere"}),
        ("ergodic-lab", {"battery": "huge"}),
    ],
)
def test_config_errors_exit_1(tmp_path, command, config):
    assert run(tmp_path, command, config)[0] == 1


def test_unreadable_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["fold", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["fold", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1


def test_radius_max_too_small_exit_1(tmp_path):
    assert run(tmp_path, "classify", {"rays": ["(a)"]}, "--radius-max", "4")[0] == 1


def test_invariant_violation_exit_2(tmp_path):
    lie = dict(eg.CANONICAL_ACTIONS[0], invariant=True)
    assert run(tmp_path, "ergodic-lab", {"actions": [lie]})[0] == 2


def test_stream_audit_failure_exit_3(tmp_path, monkeypatch):
    original = cl.tree_stream

    def broken(k):
        good = original(k)
        return cl.StreamSpec(good.dimension, 0.0, lambda g, w: 2 * good.density(g, w), exact_base=good.exact_base)

    monkeypatch.setattr(cli.cl, "tree_stream", broken)
    assert run(tmp_path, "audit-stream", {"pairs": 10})[0] == 3
    assert run(tmp_path, "classify", {"rays": ["(a)"]}, name="c")[0] == 3


@pytest.mark.skipif(shutil.which("horohopf") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(
        ["horohopf", "fold", "--out", str(tmp_path / "o")], capture_output=True, text=True, check=False
    )
    assert res.returncode == 0
    assert res.stdout.startswith("# stallings k=2 vertices=1 base=0")
