import io
import json
import math

import pytest

from powlat.cli import main
from powlat.harness import (FIG5_AXES, SWEEP_COLUMNS, REFERENCE_RATES, CapExceededError, SweepSpec,
                            load_sweep_spec, read_sweep_csv, run_sweep, validate_preset, write_rows)
from powlat.params import reference_params


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_model_grid_row_count():
    spec = SweepSpec(base=reference_params(), axes={"mu": REFERENCE_RATES, "lambda": REFERENCE_RATES})
    assert len(run_sweep(spec)) == 49


def test_empty_axes_single_row():
    rows = run_sweep(SweepSpec(base=reference_params()))
    assert len(rows) == 1
    assert rows[0]["mu"] == 0.1


def test_both_backends_double_rows():
    axes = {"block_size": [1, 2, 3]}
    one = run_sweep(SweepSpec(base=reference_params(), axes=axes, sim_time=2000))
    two = run_sweep(SweepSpec(base=reference_params(), axes=axes, backends="both", sim_time=2000))
    assert len(two) == 2 * len(one)
    assert [r["backend"] for r in two[:2]] == ["model", "simulator"]


def test_cap_exceeded():
    spec = SweepSpec(base=reference_params(), axes={"mu": REFERENCE_RATES}, cap=5)
    with pytest.raises(CapExceededError):
        spec.scenarios()


def test_fig5_grid_size():
    spec = SweepSpec(base=reference_params(), axes=FIG5_AXES)
    assert len(spec.scenarios()) == 240


def test_csv_columns_and_round_trip():
    spec = SweepSpec(base=reference_params(miners=10), axes={"lambda": [0.1, 0.3, 2.5],
                                                          "block_size": [1, 7]},
                     backends="both", sim_time=3000)
    rows = run_sweep(spec)
    buf = io.StringIO()
    write_rows(rows, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    back = read_sweep_csv(io.StringIO(text))
    for orig, parsed in zip(rows, back):
        for col in ("t_q", "t_bg", "t_bp", "p_fork", "t_bc", "fork_rate", "drop_count", "mu",
                    "lambda", "timer"):
            v = orig.get(col, math.nan)
            if isinstance(v, float) and math.isnan(v) or v is None:
                assert math.isnan(parsed[col])
            else:
                assert parsed[col] == v


def test_jsonl_output():
    buf = io.StringIO()
    write_rows(run_sweep(SweepSpec(base=reference_params(), axes={"mu": [0.1, 0.25]})), buf, fmt="jsonl")
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["mu"] for r in lines] == [0.1, 0.25]
    assert list(lines[0]) == list(SWEEP_COLUMNS)


def test_spec_file(tmp_path):
    out = tmp_path / "rows.csv"
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"base": {"mu": 0.25, "capacity_mbps": 5},
                                "axes": {"lambda": [0.25, 5], "miners": [1, 10]},
                                "backends": ["model"], "seeds": [1, 2], "output": str(out)}))
    spec = load_sweep_spec(path)
    assert spec.base.capacity_bps == 5e6
    code, _ = run_cli("sweep", str(path))
    assert code == 0
    assert len(out.read_text().splitlines()) == 1 + 4


def test_validate_small_report():
    rep = validate_preset("fig5", seeds=(1, 2), sim_time=2000)
    assert len(rep.rows) == 240
    flagged = rep.cells(miners=10, timer=1)
    assert all("fork-timer-divergence" in r["flags"] for r in flagged)
    assert "timer=100,miners=1" in rep.summary
    assert json.loads(rep.to_json())["preset"] == "fig5"


def test_fig3_reports_optima():
    rep = validate_preset("fig3", seeds=(1, 2), sim_time=500)
    assert len(rep.optima) == 3 * 3 * 2
    assert all(1 <= o["b_star"] <= 10 for o in rep.optima)
