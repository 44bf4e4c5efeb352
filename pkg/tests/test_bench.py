import io
import json

import numpy as np
import pytest

from tscd.bench import (
    COLUMNS,
    SCHEMA,
    ExperimentConfig,
    TrialRecord,
    read_csv,
    run_benchmark,
    run_trial,
    samples_to_shd0,
    summarize,
)
from tscd.cli import main


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(rho=0)
    with pytest.raises(ValueError):
        ExperimentConfig(delta=1)
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(algo="gies")
    with pytest.raises(ValueError):
        ExperimentConfig.from_json('{"nodes": 3, "colour": 1}')
    c = ExperimentConfig(nodes=3, seed=5)
    assert ExperimentConfig.from_json(c.to_json()) == c


def test_small_practical_run_ends_correct():
    cfg = ExperimentConfig(nodes=3, rho=1.0, delta=0.1, algo="practical", trials=1, seed=5, max_samples=10 ** 5)
    text, summary = run_benchmark(cfg)
    lines = text.splitlines()
    assert lines[0] == SCHEMA and lines[1] == ",".join(COLUMNS)
    last = lines[-1].split(",")
    assert last[-1] == "1" and last[-2] == "0"
    samples = [int(ln.split(",")[2]) for ln in lines[2:]]
    assert all(b > a for a, b in zip(samples, samples[1:]))
    assert summary["wrong_terminations"] == 0


@pytest.mark.parametrize("algo", ["practical", "exact", "random-baseline"])
def test_byte_identical(algo):
    cfg = ExperimentConfig(nodes=4, rho=0.7, algo=algo, trials=2, seed=3, max_samples=2000, log_every=10)
    assert run_benchmark(cfg)[0] == run_benchmark(cfg)[0]


def test_trial_failure_isolated(tmp_path):
    cfg = ExperimentConfig(nodes=3, trials=2, targets=str(tmp_path / "missing.json"), max_samples=100)
    text, summary = run_benchmark(cfg)
    assert set(summary["errors"]) == {"0", "1"}
    assert "missing.json" in summary["errors"]["0"]


def test_targets_file(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"sets": [["V1"], ["V2"], ["V3"]]}))
    cfg = ExperimentConfig(nodes=3, rho=1.0, trials=1, targets=str(p), max_samples=500)
    assert not run_trial(cfg, 0).error


def rec(trial, samples, shd):
    return TrialRecord(trial, samples, samples, "x", 0.0, shd, False)


def test_samples_to_shd0():
    assert samples_to_shd0([rec(0, 1, 2), rec(0, 5, 0), rec(0, 9, 1), rec(0, 12, 0), rec(0, 20, 0)], 100) == 12
    assert samples_to_shd0([rec(0, 1, 0), rec(0, 5, 1)], 100) == 100
    assert samples_to_shd0([], 100) == 100


def test_summary_band():
    rows = [rec(0, 1, 2), rec(0, 10, 0), rec(1, 1, 4), rec(1, 10, 2)]
    s = summarize(rows, grid=[1, 5, 10, 20])
    assert s["mean"] == [3.0, 3.0, 1.0, 1.0]
    std = np.std([2, 4], ddof=1)
    assert s["upper"][0] - s["lower"][0] == pytest.approx(4 * std)


def test_csv_round_trip():
    cfg = ExperimentConfig(nodes=3, trials=2, max_samples=300, log_every=50)
    text, _ = run_benchmark(cfg)
    rows = read_csv(io.StringIO(text))
    assert {r.trial for r in rows} == {0, 1}
    with pytest.raises(ValueError):
        read_csv(io.StringIO("a,b\n1,2\n"))


def test_cli_generate_run_benchmark(tmp_path, capsys):
    out = tmp_path / "inst"
    assert main(["generate", "--nodes", "4", "--seed", "3", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"net.bif", "dag.txt", "cpdag.txt", "targets.json"}
    res = tmp_path / "res.json"
    cand = tmp_path / "cand.json"
    rc = main(["run", "--bif", str(out / "net.bif"), "--targets", str(out / "targets.json"), "--delta", "0.2",
               "--max-samples", "3000", "--out", str(res), "--export-candidates", str(cand)])
    assert rc == 0
    data = json.loads(res.read_text())
    assert data["stopping_time"] <= 3000 and "graph" in data
    assert isinstance(json.loads(cand.read_text()), list)
    csv_path = tmp_path / "b.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nodes": 3, "trials": 2, "max_samples": 400}))
    assert main(["benchmark", "--config", str(cfg), "--seed", "9", "--out", str(csv_path)]) == 0
    first = csv_path.read_bytes()
    assert main(["benchmark", "--config", str(cfg), "--seed", "9", "--out", str(csv_path)]) == 0
    assert csv_path.read_bytes() == first
    summary = json.loads((tmp_path / "b.csv.summary.json").read_text())
    assert summary["config"]["seed"] == 9
    capsys.readouterr()
    assert main(["summarize", str(csv_path), "--budget", "400"]) == 0
    assert str(csv_path) in json.loads(capsys.readouterr().out)


def test_cli_bad_config(tmp_path):
    with pytest.raises(SystemExit):
        main(["benchmark", "--rho", "2"])
