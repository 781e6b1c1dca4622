import io
import json
import subprocess
import sys

import pytest

from powlat.cli import main

MM1K_FLAGS = ["--mu", "0.1", "--lambda", "0.25", "--block-size", "1", "--timer", "100"]


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def field(text, name):
    for line in text.splitlines():
        key, _, value = line.partition(" ")
        if key == name:
            return value.strip()
    raise KeyError(name)


def test_model_fork_probability():
    code, out = run_cli("model", "--mu", "0.1", "--lambda", "0.25", "--miners", "10",
                        "--block-size", "5")
    assert code == 0
    assert float(field(out, "p_fork")) == pytest.approx(0.020046, abs=1e-6)


def test_model_single_miner_no_forks():
    code, out = run_cli("model", *MM1K_FLAGS, "--miners", "1")
    assert code == 0
    assert float(field(out, "p_fork")) == 0
    assert float(field(out, "t_q")) == pytest.approx(6.66, abs=0.01)


def test_model_saturated_exit_code(capsys):
    code, out = run_cli("model", "--mu", "0.25", "--lambda", "0.25", "--block-size", "10")
    assert code == 2
    assert "model-unstable" in capsys.readouterr().err
    assert "saturated" in field(out, "diagnostics")


def test_model_jsonl():
    code, out = run_cli("model", *MM1K_FLAGS, "--format", "jsonl")
    rec = json.loads(out)
    assert code == 0 and rec["t_bg"] == 4.0


def test_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"mu": 0.1, "lambda": 0.25, "block_size": 1, "tx_kbits": 5}))
    code, out = run_cli("model", "--scenario", str(path), "--miners", "1")
    assert code == 0
    assert float(field(out, "t_bp")) == pytest.approx(0.005)


def test_usage_errors():
    assert run_cli("model", "--block-size", "0")[0] == 1
    assert run_cli("optimize", "--nodes", "2")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["model", "--bogus"])
    assert exc.value.code == 1


def test_io_error(tmp_path):
    code, _ = run_cli("validate", "fig5", "--output", str(tmp_path / "missing" / "x.json"),
                      "--sim-time", "10", "--replications", "2")
    assert code == 3


def test_simulate_single_miner():
    code, out = run_cli("simulate", *MM1K_FLAGS, "--miners", "1", "--sim-time", "20000")
    assert code == 0
    assert float(field(out, "fork_rate")) == 0


def test_simulate_mm1k():
    code, out = run_cli("simulate", *MM1K_FLAGS, "--replications", "5")
    assert code == 0
    assert float(field(out, "mean_pool_delay")) == pytest.approx(6.66, rel=0.05)


def test_simulate_trace(tmp_path):
    trace = tmp_path / "t.tsv"
    code, _ = run_cli("simulate", *MM1K_FLAGS, "--sim-time", "500", "--trace", str(trace))
    assert code == 0
    first = trace.read_text().splitlines()[0].split("\t")
    assert len(first) == 5


def test_optimize_fig3b_setting():
    code, out = run_cli("optimize", "--mu", "0.25", "--lambda", "0.1", "--miners", "1",
                        "--assumption1")
    assert code == 0
    assert int(field(out, "b_star")) == 4


def test_optimize_increasing_latency():
    code, out = run_cli("optimize", "--mu", "0.1", "--lambda", "0.25")
    assert int(field(out, "b_star")) == 1


@pytest.mark.parametrize("argv", [
    ["simulate", "--seed", "42", "--mu", "0.5", "--miners", "10", "--block-size", "3",
     "--timer", "5", "--sim-time", "5000"],
    ["simulate", "--seed", "42", "--replications", "3", "--sim-time", "3000"],
    ["model", "--mu", "2.5", "--lambda", "0.5", "--block-size", "4", "--miners", "10"],
    ["optimize", "--mu", "0.25", "--lambda", "0.2"],
])
def test_byte_identical_subprocess_runs(argv):
    cmd = [sys.executable, "-m", "powlat", *argv]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a
