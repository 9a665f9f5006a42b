import csv
import json

import pytest

import main
import src.benchmark as benchmark
from src.errors import SolverDivergedError
from src.selftest import SuiteResult
from src.spectral import Grid2
from src.tracker import ScaleConfig

SHORT = ["--set", "synthetic.frames=6", "--set", "scale.num_scales=3"]


def test_defaults_command(capsys):
    assert main.main(["defaults"]) == 0
    out = capsys.readouterr().out
    assert "solver.admm_iterations=4" in out
    assert "update.threshold_high=0.6" in out


def test_synth_then_track(tmp_path):
    seq = tmp_path / "seq"
    assert main.main(["synth", "--out", str(seq)] + SHORT) == 0
    assert (seq / "groundtruth_rect.txt").is_file()
    assert (seq / "0006.png").is_file()

    out = tmp_path / "out"
    assert main.main(["track", str(seq), "--out", str(out), "--trace"] + SHORT) == 0
    for name in ("boxes.csv", "decisions.csv", "metrics.json", "curves.csv", "run_config.env", "solver_trace.csv"):
        assert (out / name).is_file()
    with open(out / "boxes.csv") as f:
        assert len(list(csv.reader(f))) == 7


def test_track_synthetic_matches_written_sequence(tmp_path):
    seq = tmp_path / "seq"
    main.main(["synth", "--out", str(seq)] + SHORT)
    main.main(["track", str(seq), "--out", str(tmp_path / "disk")] + SHORT)
    main.main(["track", "--synthetic", "--out", str(tmp_path / "memory")] + SHORT)
    assert (tmp_path / "disk" / "boxes.csv").read_bytes() == (tmp_path / "memory" / "boxes.csv").read_bytes()


def test_track_is_deterministic(tmp_path):
    for name in ("one", "two"):
        assert main.main(["track", "--synthetic", "--seed", "3", "--out", str(tmp_path / name)] + SHORT) == 0
    for name in ("boxes.csv", "metrics.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_synth_is_reproducible(tmp_path):
    for name in ("one", "two"):
        assert main.main(["synth", "--seed", "11", "--out", str(tmp_path / name)] + SHORT) == 0
    one = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert one == sorted(p.name for p in (tmp_path / "two").iterdir())
    assert "0006.png" in one
    for name in one:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_track_several_sequences(tmp_path):
    for name in ("a", "b"):
        main.main(["synth", "--out", str(tmp_path / name)] + SHORT)
    out = tmp_path / "out"
    assert main.main(["track", str(tmp_path / "a"), str(tmp_path / "b"), "--out", str(out)] + SHORT) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [s["name"] for s in summary["sequences"]] == ["a", "b"]
    assert (out / "a" / "boxes.csv").is_file()


def test_config_errors_exit_1(tmp_path, capsys):
    assert main.main(["defaults", "--set", "solver.nonsense=1"]) == 1
    assert "solver.nonsense" in capsys.readouterr().err
    assert main.main(["defaults", "--set", "novalue"]) == 1
    assert main.main(["track", "--out", str(tmp_path)]) == 1
    assert main.main(["defaults", "--config", str(tmp_path / "missing.env")]) == 1


def test_data_errors_exit_2(tmp_path):
    assert main.main(["track", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "groundtruth_rect.txt").write_text("1,1,4,4\n")
    assert main.main(["track", str(empty), "--out", str(tmp_path / "out")]) == 2


def test_solver_divergence_exits_3(tmp_path, monkeypatch):
    def diverge(*args, **kwargs):
        raise SolverDivergedError(2)

    monkeypatch.setattr("src.tracker.run_admm", diverge)
    assert main.main(["track", "--synthetic", "--out", str(tmp_path)] + SHORT) == 3


def test_selftest_command(capsys):
    assert main.main(["selftest", "--suite", "consensus-formula", "--suite", "gated-update"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] consensus-formula" in out
    assert "All 2 suites passed" in out


def test_selftest_failure_exits_4(monkeypatch):
    failed = SuiteResult("broken", checks=1, failures=["nope"])
    monkeypatch.setattr(main, "run_selftest", lambda seed, names: [failed])
    assert main.main(["selftest"]) == 4


def test_bench_command(tmp_path, capsys):
    assert main.main(["bench", "--sizes", "8,12", "--repeats", "1", "--channels", "2", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0] == "op,grid,channels,iterations,ms_mean,ms_p95"
    assert [line.split(",")[0] for line in lines[1:]] == ["train", "detect", "train", "detect"]
    assert main.main(["bench", "--sizes", "2"]) == 1
    assert main.main(["bench", "--sizes", "a,b"]) == 1


def test_bench_detect_rows_run_the_tracker(monkeypatch):
    calls = []
    real_detect = benchmark.detect

    def counting_detect(state, frame):
        calls.append((state.geometry.outer, frame.shape))
        return real_detect(state, frame)

    monkeypatch.setattr(benchmark, "detect", counting_detect)
    rows = benchmark.run_benchmark([8], channels=3, repeats=2, scale=ScaleConfig(num_scales=3))
    detect_row = [row for row in rows if row["op"] == "detect"][0]
    assert detect_row["iterations"] == 3
    assert detect_row["channels"] == 3
    assert len(calls) == 2
    assert calls[0] == (Grid2(8, 8), (64, 64))


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main.main(["fly"])
