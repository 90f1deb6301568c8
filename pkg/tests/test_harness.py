import csv
import json
import shutil

import pytest
from hypothesis import given, settings, strategies as st

from iiclab.cli import doubling_range, int_range, main
from iiclab.harness import (
    ConfigError,
    ExperimentConfig,
    RunFailed,
    RunManifest,
    render_report,
    run_experiment,
)

ARMS = dict(kind="arms", radii=(8, 16, 32), trials=1000, chunk=250, bootstrap=100)
WALK = dict(kind="walk", n=32, T_grid=(16, 32, 64, 128, 256), R_grid=(2, 3, 4, 6, 8), R_grid_euc=(2, 3, 4, 6, 8), clusters=4, walks=2, hit_walks=1, hit_budget=4096, bootstrap=50)
WEIGHTS = dict(kind="weights", n=64, k_max=4, eps=0.25, clusters=3, sources=3, pairs_per_source=6, bootstrap=50)


def read(path):
    return path.read_bytes()


def outputs(d, man):
    return {name: read(d / name) for name in man.outputs}


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(["arms", "backbone", "walk", "weights", "markov-type", "full-pipeline"]),
    st.integers(0, 2**40),
    st.floats(0.01, 0.5),
    st.lists(st.integers(1, 300), min_size=1, max_size=5, unique=True),
)
def test_config_yaml_roundtrip(kind, seed, eps, radii):
    c = ExperimentConfig(kind=kind, seed=seed, eps=eps, radii=tuple(sorted(radii)), out_dir="x")
    assert ExperimentConfig.from_yaml(c.to_yaml()) == c
    assert ExperimentConfig.from_yaml(c.to_yaml()).digest() == c.digest()


def test_config_rejects_unknown_and_invalid():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_yaml("kind: arms\ntrails: 10\n")
    bad = [dict(trials=0), dict(eps=0.6), dict(dprime=2.0), dict(radii=(16, 8)), dict(kind="nope"), dict(k_min=5, k_max=3)]
    for kw in bad:
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)


def test_arms_run_shape(tmp_path):
    c = ExperimentConfig(seed=1, out_dir=str(tmp_path / "a"), **ARMS)
    man = run_experiment(c, workers=1)
    rows = list(csv.DictReader(open(tmp_path / "a" / "arms.csv")))
    assert [int(r["n"]) for r in rows] == [8, 16, 32]
    assert all(int(r["trials"]) == 1000 for r in rows)
    fit = json.loads((tmp_path / "a" / "arms_fit.json").read_text())
    assert fit["violations"] == 0 and len(fit["bound_z"]) == 3
    assert man.verify(tmp_path / "a") == []
    assert man.task_count == 4 and len(man.tasks) == 4


@pytest.mark.parametrize("overrides", [ARMS, WALK, WEIGHTS], ids=["arms", "walk", "weights"])
def test_determinism_and_worker_independence(tmp_path, overrides):
    a = ExperimentConfig(seed=3, out_dir=str(tmp_path / "a"), **overrides)
    b = ExperimentConfig(seed=3, out_dir=str(tmp_path / "b"), **overrides)
    ma = run_experiment(a, workers=1)
    mb = run_experiment(b, workers=2)
    assert outputs(tmp_path / "a", ma) == outputs(tmp_path / "b", mb)
    assert ma.config_hash == mb.config_hash
    # rerun in place: everything is skipped and files are unchanged
    before = outputs(tmp_path / "a", ma)
    again = run_experiment(a, workers=1)
    assert again.executed == 0 and outputs(tmp_path / "a", again) == before


@pytest.mark.parametrize("overrides", [ARMS, WEIGHTS], ids=["arms", "weights"])
def test_resume_after_interruption(tmp_path, overrides):
    ref = ExperimentConfig(seed=4, out_dir=str(tmp_path / "ref"), **overrides)
    mref = run_experiment(ref, workers=1)
    c = ExperimentConfig(seed=4, out_dir=str(tmp_path / "cut"), **overrides)
    some = sorted(mref.tasks)[:1]
    with pytest.raises(RunFailed) as err:
        run_experiment(c, workers=1, keys_only=set(some))
    assert err.value.failed and some[0] not in err.value.failed
    part = RunManifest.load(tmp_path / "cut" / "manifest.json")
    assert set(part.tasks) == set(some)
    man = run_experiment(c, workers=1)
    assert outputs(tmp_path / "cut", man) == outputs(tmp_path / "ref", mref)
    assert man.verify(tmp_path / "cut") == []


def test_corrupt_task_is_recomputed(tmp_path):
    c = ExperimentConfig(seed=5, out_dir=str(tmp_path / "r"), **ARMS)
    m1 = run_experiment(c, workers=1)
    victim = tmp_path / "r" / "tasks" / "arms-00001.json"
    victim.write_text("{}")
    m2 = run_experiment(c, workers=1)
    assert m2.executed == 1
    assert outputs(tmp_path / "r", m1) == outputs(tmp_path / "r", m2)


def test_verify_detects_tampering(tmp_path):
    c = ExperimentConfig(seed=5, out_dir=str(tmp_path / "r"), **ARMS)
    man = run_experiment(c, workers=1)
    (tmp_path / "r" / "arms.csv").write_text("n\n")
    assert man.verify(tmp_path / "r") == ["arms.csv"]


def test_other_config_in_same_directory_refused(tmp_path):
    run_experiment(ExperimentConfig(seed=1, out_dir=str(tmp_path / "r"), **ARMS), workers=1)
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(seed=2, out_dir=str(tmp_path / "r"), **ARMS), workers=1)


def test_markov_type_and_backbone_runs(tmp_path):
    m = run_experiment(ExperimentConfig(kind="markov-type", seed=0, n=64, k_max=4, clusters=2, mtype_walks=20, t_grid=(1, 2, 4), out_dir=str(tmp_path / "m")), workers=1)
    assert set(m.outputs) == {"weights.csv", "mtype.csv"}
    b = run_experiment(ExperimentConfig(kind="backbone", seed=0, n=32, k_min=2, k_max=3, clusters=3, out_dir=str(tmp_path / "b")), workers=1)
    rows = list(csv.DictReader(open(tmp_path / "b" / "backbone.csv")))
    assert [int(r["k"]) for r in rows] == [2, 3]
    assert len((tmp_path / "b" / "backbone_samples.jsonl").read_text().splitlines()) == 3


def test_full_pipeline_quick_report(tmp_path):
    c = ExperimentConfig(kind="full-pipeline", quick=True, criteria=(2, 3, 4, 6), out_dir=str(tmp_path / "f"))
    man = run_experiment(c, workers=1)
    rows = json.loads((tmp_path / "f" / "acceptance.json").read_text())
    assert [r["number"] for r in rows] == [2, 3, 4, 6]
    text = render_report(tmp_path / "f")
    assert "arm inequalities" in text and "PASS" in text
    assert man.verify(tmp_path / "f") == []


def test_ranges():
    assert int_range("2..5") == [2, 3, 4, 5]
    assert doubling_range("64..16384") == [64 * 2**i for i in range(9)]
    assert doubling_range("8,16") == [8, 16]


def test_cli_end_to_end(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("IICLAB_OUT", str(tmp_path))
    assert main(["sample", "--n", "8", "--seed", "2"]) == 0
    assert (tmp_path / "sample-n8-s2.bin.json").exists()
    assert main(["covering", "verify", "--k-max", "3", "--window", "16", "--seeds", "1,2", "--padding-samples", "100"]) == 0
    assert len(list(csv.DictReader(open(tmp_path / "covering.csv")))) == 6
    assert main(["arms", "--n", "4,8", "--trials", "200", "--workers", "1"]) == 0
    assert main(["walk", "--n", "16", "--T", "8..128", "--R", "2,3,4,5,6", "--clusters", "3", "--walks", "2", "--workers", "1"]) == 0
    assert main(["fit", "--in", str(tmp_path / "walk.csv"), "--drop-first", "--bootstrap", "50"]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert "max_chem2" in fit["fits"]
    assert main(["weights", "build", "--k", "3", "--mode", "mixture", "--n", "32", "--calibration", "3"]) == 0
    assert main(["distances", "--metric", "weighted", "--weights", str(tmp_path / "weights.jsonl"), "--pairs", "20", "--n", "32"]) == 0
    assert main(["mtype", "--weights", str(tmp_path / "weights.jsonl"), "--t", "1..8", "--walks", "10"]) == 0
    assert main(["backbone-stats", "--k", "2..3", "--ensemble", "3", "--n", "32", "--workers", "1"]) == 0
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("kind: full-pipeline\nquick: true\ncriteria: [6]\n")
    assert main(["experiment", str(cfg), "--workers", "1"]) == 0
    assert main(["report"]) == 0
    assert "Markov-type algebra" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "missing")]) == 2
