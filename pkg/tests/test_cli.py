import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

import shiftpod.objective as objective_mod
from shiftpod.cli import DEFAULTS, RunConfig, UsageError, gradcheck, load_config, main
from shiftpod.matio import read_matrix, write_matrix


def decompose(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["decompose", "--out", str(out), *extra])
    return code, out


TWO_WAVE = ["--generator", "two-wave", "--shift-mode", "exact", "--set", "optimizer.error_tol=1e-6"]


def test_generate_writes_field_and_truth(tmp_path):
    assert main(["generate", "two-wave", "--out", str(tmp_path), "--m", "40", "--n", "20"]) == 0
    q = read_matrix(tmp_path / "q.csv")
    assert q.shape == (40, 20)
    assert read_matrix(tmp_path / "paths.csv").shape == (2, 20)
    assert read_matrix(tmp_path / "truth_0.csv").shape == (40, 20)
    grid = yaml.safe_load((tmp_path / "grid.yaml").read_text())
    assert grid["m"] == 40 and grid["periodic"] is True


def test_generate_binary(tmp_path):
    assert main(["generate", "identity", "--out", str(tmp_path), "--d", "6", "--format", "bin"]) == 0
    np.testing.assert_array_equal(read_matrix(tmp_path / "q.bin"), np.eye(6))


def test_decompose_generated_converges(tmp_path):
    code, out = decompose(tmp_path, "run", *TWO_WAVE, "--step", "svd_update")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "converged" and rep["rel_error"] < 1e-5
    lines = (out / "trace.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["iteration"] == 0
    assert read_matrix(out / "spectra.csv").shape[0] == 2
    for k in range(2):
        assert (out / f"frame_{k}.csv").exists() and (out / f"lab_{k}.csv").exists()


def test_decompose_is_deterministic(tmp_path):
    _, a = decompose(tmp_path, "a", *TWO_WAVE, "--method", "lbfgs")
    _, b = decompose(tmp_path, "b", *TWO_WAVE, "--method", "lbfgs")
    for name in ("frame_0.csv", "frame_1.csv", "spectra.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    strip = lambda p: [{k: v for k, v in json.loads(l).items() if k != "wall_time"}
                       for l in (p / "trace.jsonl").read_text().splitlines()]
    assert strip(a) == strip(b)


def test_decompose_from_files_then_report(tmp_path):
    gen = tmp_path / "gen"
    main(["generate", "two-wave", "--out", str(gen)])
    code, out = decompose(tmp_path, "run", "--input", str(gen / "q.csv"), "--paths", str(gen / "paths.csv"),
                          "--shift-mode", "exact", "--method", "lbfgs", "--set", "optimizer.error_tol=1e-6")
    assert code == 0
    assert main(["report", str(out), "--input", str(gen / "q.csv"), "--shift-mode", "exact"]) == 0


def test_velocities_path_source(tmp_path):
    gen = tmp_path / "gen"
    main(["generate", "two-wave", "--out", str(gen)])
    code, _ = decompose(tmp_path, "run", "--input", str(gen / "q.csv"), "--velocities", "1,-1",
                        "--shift-mode", "exact", "--method", "lbfgs", "--set", "optimizer.error_tol=1e-6")
    assert code == 0


def test_nonconvergence_exit_code(tmp_path):
    code, out = decompose(tmp_path, "run", "--generator", "two-wave", "--shift-mode", "exact",
                          "--max-iters", "2", "--set", "optimizer.grad_tol=0")
    assert code == 3
    assert json.loads((out / "report.json").read_text())["status"] == "max_iters"


@pytest.mark.parametrize("argv", [
    ["decompose"],
    ["decompose", "--generator", "two-wave", "--kind", "J9"],
    ["decompose", "--generator", "two-wave", "--input", "x.csv"],
    ["decompose", "--generator", "two-wave", "--set", "nonsense"],
    ["decompose", "--generator", "two-wave", "--ranks", "a,b"],
    ["decompose", "--generator", "two-wave", "--set", "bogus.key=1"],
    ["generate", "nothing", "--out", "x"],
    ["generate", "two-wave"],
    ["gradcheck", "--kinds", "J7"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(tmp_path, argv, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_data_errors_exit_2(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    code, _ = decompose(tmp_path, "run", "--input", str(tmp_path / "bad.csv"), "--velocities", "1")
    assert code == 2
    assert main(["pod", "--input", str(tmp_path / "missing.csv"), "--rank", "1"]) == 2
    write_matrix(tmp_path / "q.csv", np.eye(4))
    assert main(["pod", "--input", str(tmp_path / "q.csv"), "--rank", "9"]) == 2
    code, _ = decompose(tmp_path, "r2", "--input", str(tmp_path / "q.csv"), "--velocities", "0.3",
                        "--shift-mode", "exact")
    assert code == 2


def test_pod_command(tmp_path, capsys):
    write_matrix(tmp_path / "q.bin", np.eye(10))
    assert main(["pod", "--input", str(tmp_path / "q.bin"), "--rank", "4", "--out", str(tmp_path / "a.csv")]) == 0
    err = float(capsys.readouterr().out.split()[-1])
    assert abs(err - np.sqrt(0.6)) < 1e-12
    assert read_matrix(tmp_path / "a.csv").shape == (10, 10)


def test_config_precedence(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"objective": {"kind": "J1", "penalty_epsilon": 0.5},
                                    "optimizer": {"max_iters": 7}}))
    cfg = load_config(path, ["objective.kind=J12", "optimizer.max_iters=9"], {"optimizer.max_iters": 11})
    assert cfg["objective"]["kind"] == "J12"
    assert cfg["objective"]["penalty_epsilon"] == 0.5
    assert cfg["optimizer"]["max_iters"] == 11
    assert cfg["shift"] == DEFAULTS["shift"]
    with pytest.raises(UsageError):
        RunConfig.from_dict(cfg)


def test_config_file_run(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({
        "input": {"generator": {"name": "leaving", "m": 60, "n": 30}},
        "paths": {"generator": True},
        "shift": {"mode": "exact"},
        "extension": {"fill": 0},
        "optimizer": {"method": "lbfgs", "error_tol": 1e-8},
        "output": {"dir": str(tmp_path / "out"), "format": "bin"},
    }))
    assert main(["decompose", "--config", str(path)]) == 0
    assert read_matrix(tmp_path / "out" / "frame_0.bin").shape[1] == 30


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--instances", "4"]) == 0
    assert "passed" in capsys.readouterr().out


def test_gradcheck_catches_wrong_gradient(monkeypatch):
    right = objective_mod.frame_gradient
    monkeypatch.setattr(objective_mod, "frame_gradient", lambda *a, **k: 1.01 * right(*a, **k))
    res = gradcheck(instances=3, kinds=["J2", "J12"])
    assert all(r["max_rel_error"] > 1e-3 for r in res.values())


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shiftpod", "decompose", "--kind", "J2"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "input source" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "shiftpod", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gradcheck" in proc.stdout


def test_detector_path_source(tmp_path):
    gen = tmp_path / "gen"
    main(["generate", "leaving", "--out", str(gen), "--n", "20"])
    code, out = decompose(tmp_path, "run", "--input", str(gen / "q.csv"), "--set", "paths.detector={mode: peak}",
                          "--shift-mode", "interpolated", "--method", "lbfgs", "--max-iters", "20",
                          "--set", "extension.fill=0")
    assert code in (0, 3)
    detected = read_matrix(out / "paths.csv")[0]
    truth = read_matrix(gen / "paths.csv")[0]
    assert np.max(np.abs(detected - truth)) < 0.05
