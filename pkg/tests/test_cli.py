import json
import math
import subprocess
import sys

import pytest

from fracheat import serialize
from fracheat.cli import EXIT_BUDGET, EXIT_OK, EXIT_USAGE, main


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_kernel_cauchy_origin(capsys):
    assert main(["kernel", "--d", "2", "--alpha", "1", "--r", "0"]) == EXIT_OK
    rows = serialize.read_csv_text(capsys.readouterr().out)
    assert rows[0]["p"] == pytest.approx(1 / (2 * math.pi), rel=1e-12)


def test_kernel_alpha_two_is_usage_error(capsys):
    assert main(["kernel", "--alpha", "2"]) == EXIT_USAGE
    assert "alpha" in capsys.readouterr().err


def test_kernel_normalization(tmp_path):
    code, out = run(tmp_path, "k.json", "kernel", "--d", "2", "--alpha", "1.5", "--r", "0", "--check-normalization", "--format", "json")
    assert code == EXIT_OK
    man = json.loads((tmp_path / "k.json.manifest.json").read_text())
    assert abs(man["results"]["normalization_residual"]) < 1e-4
    assert abs(json.loads(out.read_text())["normalization_residual"]) < 1e-4


def test_shell_square(tmp_path):
    code, out = run(tmp_path, "s.csv", "shell", "--domain", "square")
    assert code == EXIT_OK
    rows = serialize.read_csv_text(out.read_text())
    assert rows[-1]["ratio"] == pytest.approx(4.0, rel=0.01)


def test_manifest_echoes_config(tmp_path):
    code, out = run(tmp_path, "s.csv", "shell", "--domain", "lshape", "--s", "0.01", "0.001")
    man = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert man["command"] == "shell" and man["status"] == "ok"
    assert man["config"]["domain"] == "lshape" and man["config"]["s"] == [0.01, 0.001]
    assert man["outputs"] == ["s.csv"]
    assert "threads" not in man["config"]


def test_c2_bytes_reproducible_and_thread_independent(tmp_path):
    base = ["c2", "--d", "2", "--alpha", "1", "--tol", "0.02", "--seed", "7", "--n-paths", "4000", "--dt", "0.01"]
    outs, mans = [], []
    for i, threads in enumerate(("1", "1", "4")):
        run_dir = tmp_path / str(i)
        run_dir.mkdir()
        code, out = run(run_dir, "c2.csv", *base, "--threads", threads)
        assert code == EXIT_OK
        outs.append(out.read_bytes())
        man = json.loads((run_dir / "c2.csv.manifest.json").read_text())
        man.pop("timestamp")
        mans.append(man)
    assert outs[0] == outs[1] == outs[2]
    assert mans[0] == mans[1] == mans[2]


def test_c2_budget_exceeded_writes_partials(tmp_path):
    code, out = run(tmp_path, "c2.json", "c2", "--tol", "1e-5", "--n-paths", "500", "--dt", "0.02", "--format", "json")
    assert code == EXIT_BUDGET
    res = serialize.c2_from_dict(json.loads(out.read_text()))
    assert res.value > 0
    man = json.loads((tmp_path / "c2.json.manifest.json").read_text())
    assert man["status"] == "budget_exceeded"


def test_profile_and_trace_reproducible(tmp_path):
    prof = ["profile", "--q-min", "0.01", "--q-max", "5", "--n-q", "8", "--dt", "0.02", "--n-paths", "500", "--seed", "3"]
    tr = ["trace", "--domain", "disk", "--t", "0.01", "0.005", "--steps", "20", "--n-paths", "600", "--seed", "3"]
    for argv in (prof, tr):
        a = run(tmp_path, "a.out", *argv, "--threads", "1")[1].read_bytes()
        b = run(tmp_path, "b.out", *argv, "--threads", "3")[1].read_bytes()
        assert a == b


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": "disk", "s": [0.001]}))
    code, out = run(tmp_path, "s.csv", "shell", "--config", str(cfg))
    assert code == EXIT_OK
    assert serialize.read_csv_text(out.read_text())[0]["ratio"] == pytest.approx(2 * math.pi, rel=0.01)
    # flags override the file
    run(tmp_path, "s2.csv", "shell", "--config", str(cfg), "--domain", "square")
    assert serialize.read_csv_text((tmp_path / "s2.csv").read_text())[0]["ratio"] == pytest.approx(4.0, rel=0.01)
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["shell", "--config", str(cfg)]) == EXIT_USAGE


def test_unbounded_domain_rejected():
    assert main(["trace", "--domain", "halfspace", "--n-paths", "10"]) == EXIT_USAGE


@pytest.mark.slow
def test_fit_lshape_matches_square(tmp_path):
    rows = {}
    for dom in ("square", "lshape"):
        code, out = run(tmp_path, f"{dom}.csv", "fit", "--domain", dom, "--alpha", "1", "--n-paths", "20000", "--steps", "100", "--seed", "5")
        assert code == EXIT_OK
        rows[dom] = serialize.read_csv_text(out.read_text())[0]
    a, b = rows["square"], rows["lshape"]
    assert abs(a["slope"] - b["slope"]) < 3 * math.hypot(a["slope_error"], b["slope_error"])


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracheat.cli", "kernel", "--r", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert serialize.read_csv_text(proc.stdout)[0]["p"] == pytest.approx(1 / (2 * math.pi) * 2 ** -1.5, rel=1e-12)
