import csv
import json

import pytest

from crossfire import scenarios
from crossfire.cli import main
from crossfire.engine import load_scenario


@pytest.fixture
def fig1_file(tmp_path):
    path = tmp_path / "fig1.json"
    path.write_text(scenarios.dumps(scenarios.figure1(total_ticks=200)))
    return path


def test_run_writes_artifacts(fig1_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(fig1_file), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["summary.json", "trace.csv"]
    assert "attack_effective_fraction" in capsys.readouterr().out
    assert json.loads((out / "summary.json").read_text())["total_ticks"] == 200


def test_seed_override(fig1_file, tmp_path):
    assert main(["run", str(fig1_file), "--out", str(tmp_path), "--seed", "42"]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["rng_seed"] == 42


def test_missing_topology(tmp_path, capsys):
    spec = scenarios.figure1()
    del spec["topology"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(spec))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "topology" in capsys.readouterr().err


def test_unreadable_scenario(tmp_path, capsys):
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["validate", str(tmp_path / "junk.json")]) == 1
    assert main(["validate", str(tmp_path / "absent.json")]) == 1


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_sweep(fig1_file, tmp_path, capsys, jobs):
    out = tmp_path / "sweep"
    assert main(["run", str(fig1_file), "--out", str(out), "--sweep", "beta=0,1,2,3", "--jobs", jobs]) == 0
    for v in range(4):
        assert (out / f"beta={v}" / "trace.csv").exists()
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["beta"] for r in rows] == ["0", "1", "2", "3"]
    assert [int(r["rng_seed"]) for r in rows] == [1, 2, 3, 4]
    assert capsys.readouterr().out.count("== beta=") == 4


def test_sweep_bad_field(fig1_file, tmp_path):
    assert main(["run", str(fig1_file), "--out", str(tmp_path), "--sweep", "gamma=1,2"]) == 1
    assert main(["run", str(fig1_file), "--out", str(tmp_path), "--sweep", "beta"]) == 1


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["generate", "random", "--nodes", "9", "--bots", "6", "--seed", "5", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_generate_random_needs_seed():
    assert main(["generate", "random"]) == 1


@pytest.mark.parametrize("kind", ["figure1", "detection", "batching"])
def test_generate_builtin(kind, capsys):
    assert main(["generate", kind]) == 0
    load_scenario(json.loads(capsys.readouterr().out))


def test_generated_random_scenarios_validate(tmp_path, capsys):
    for seed in range(200):
        path = tmp_path / f"r{seed}.json"
        assert main(["generate", "random", "--seed", str(seed), "--out", str(path)]) == 0
        assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.count("ok:") == 200


def test_generate_too_small():
    assert main(["generate", "random", "--seed", "1", "--nodes", "3"]) == 1


def test_runtime_error_exit_code(monkeypatch, fig1_file, tmp_path):
    from crossfire import engine
    from crossfire.errors import SimulationError

    def boom(cfg):
        raise SimulationError("forced")

    monkeypatch.setattr(engine, "run", boom)
    assert main(["run", str(fig1_file), "--out", str(tmp_path)]) == 2


def test_generate_round_trip(tmp_path):
    path = tmp_path / "g.json"
    main(["generate", "random", "--seed", "11", "--out", str(path)])
    spec = json.loads(path.read_text())
    cfg = load_scenario(spec)
    from crossfire.engine import scenario_to_spec

    assert load_scenario(scenario_to_spec(cfg)) == cfg


def test_module_entry_point(fig1_file):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "crossfire", "validate", str(fig1_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok:")
