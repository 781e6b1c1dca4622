"""Parameter sweeps and model-versus-simulation comparison reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .latency import ForkSaturatedError, confirmation_latency
from .optimize import brute_force_block_size, optimize_block_size
from .params import ScenarioParams, params_from_dict, reference_params, validate_params
from .queue import OCCUPANCY, QueueModelError
from .sim import SimConfig, run_replications

SWEEP_COLUMNS = ("mu", "lambda", "miners", "queue_size", "block_size", "timer", "backend",
                 "seed_count", "t_q", "t_bg", "t_bp", "p_fork", "t_bc", "fork_rate",
                 "drop_count", "diag")
NUMERIC_COLUMNS = ("mu", "lambda", "miners", "queue_size", "block_size", "timer", "seed_count",
                   "t_q", "t_bg", "t_bp", "p_fork", "t_bc", "fork_rate", "drop_count")
BACKENDS = ("model", "simulator")
DEFAULT_CAP = 10**6

# sweep axis name -> ScenarioParams field
AXES = {"mu": "mu", "lambda": "lam", "lam": "lam", "miners": "miners", "block_size": "block_size_tx",
        "block_size_tx": "block_size_tx", "timer": "timer"}

# reference value sets
REFERENCE_RATES = (0.1, 0.25, 0.5, 1, 2.5, 5, 10)
TABLE1_TIMERS = (0.1, 1, 5, 10, 100)
TABLE1_MINERS = (1, 10)


class CapExceededError(ValueError):
    pass


@dataclass
class SweepSpec:
    base: ScenarioParams = field(default_factory=ScenarioParams)
    axes: dict = field(default_factory=dict)
    backends: tuple = ("model",)
    seeds: tuple = (1, 2, 3)
    output: str | None = None
    format: str = "csv"
    sim_time: float = 100_000.0
    timer_disabled: bool = False
    variant: str = OCCUPANCY
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if isinstance(self.backends, str):
            self.backends = BACKENDS if self.backends == "both" else (self.backends,)
        self.backends = tuple("simulator" if b == "sim" else b for b in self.backends)
        bad = [b for b in self.backends if b not in BACKENDS]
        if bad:
            raise ValueError(f"unknown backend(s) {bad}; choose from model, simulator, both")
        for name in self.axes:
            if name not in AXES:
                raise ValueError(f"unknown sweep axis {name!r}")
        if "simulator" in self.backends and len(self.seeds) < 2:
            raise ValueError("simulator backend needs at least two seeds")

    def scenarios(self):
        """Cartesian product of the axes over the base scenario, in sorted order."""
        names = sorted(self.axes)
        size = math.prod(len(self.axes[n]) for n in names) * len(self.backends)
        if size > self.cap:
            raise CapExceededError(f"cap-exceeded: sweep has {size} rows, cap is {self.cap}")
        out = []
        for combo in itertools.product(*(sorted(self.axes[n]) for n in names)):
            changes = {AXES[n]: v for n, v in zip(names, combo)}
            out.append(validate_params(dataclasses.replace(self.base, **changes)))
        return out


def load_sweep_spec(path) -> SweepSpec:
    with open(path) as fh:
        raw = json.load(fh)
    base = params_from_dict(raw.get("base", {}))
    known = {f.name for f in dataclasses.fields(SweepSpec)} - {"base"}
    extra = set(raw) - known - {"base"}
    if extra:
        raise ValueError(f"unknown sweep spec keys {sorted(extra)}")
    kw = {k: v for k, v in raw.items() if k != "base"}
    if "seeds" in kw:
        kw["seeds"] = tuple(kw["seeds"])
    return SweepSpec(base=base, **kw)


def evaluate_model(p: ScenarioParams, timer_disabled=False, variant=OCCUPANCY) -> dict:
    row = {"t_q": math.nan, "t_bg": math.nan, "t_bp": math.nan, "p_fork": math.nan,
           "t_bc": math.nan, "diag": ""}
    try:
        lat = confirmation_latency(p, timer_disabled, variant)
    except (QueueModelError, ForkSaturatedError) as exc:
        row["diag"] = str(exc)
        return row
    row.update(lat.as_dict())
    row["diag"] = ";".join(lat.diagnostics)
    return row


def evaluate_simulator(p: ScenarioParams, seeds, sim_time) -> dict:
    agg = run_replications(SimConfig(p, sim_time=sim_time), seeds)
    m = agg.mean
    return {"t_q": m["mean_pool_delay"], "t_q_ci": agg.ci["mean_pool_delay"],
            "t_bc": m["mean_confirmation_latency"], "fork_rate": m["fork_rate"],
            "drop_count": m["drop_count"], "diag": "" if agg.runs[0].delay_samples else "no-samples"}


def _sweep_cell(args):
    p, backend, spec = args
    row = {"mu": p.mu, "lambda": p.lam, "miners": p.miners, "queue_size": p.queue_size,
           "block_size": p.block_size_tx, "timer": p.timer, "backend": backend}
    if backend == "model":
        row["seed_count"] = 0
        row.update(evaluate_model(p, spec.timer_disabled, spec.variant))
    else:
        row["seed_count"] = len(spec.seeds)
        sim = evaluate_simulator(p, spec.seeds, spec.sim_time)
        sim.pop("t_q_ci")
        row.update(sim)
    return row


def _pmap(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list:
    """One row per (scenario, backend), ordered by scenario then backend."""
    cells = [(p, backend, spec) for p in spec.scenarios() for backend in spec.backends]
    return _pmap(_sweep_cell, cells, jobs)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    return str(v)


def write_rows(rows, fh, columns=SWEEP_COLUMNS, fmt="csv"):
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    elif fmt == "jsonl":
        for r in rows:
            fh.write(json.dumps({c: _jsonable(r.get(c)) for c in columns}, sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_sweep_csv(fh) -> list:
    """Parse a sweep CSV back into typed rows (empty numeric fields become NaN)."""
    rows = []
    for rec in csv.DictReader(fh):
        row = {}
        for k, v in rec.items():
            if k in NUMERIC_COLUMNS:
                row[k] = float(v) if v != "" else math.nan
            else:
                row[k] = v
        rows.append(row)
    return rows


# --- comparison reports -------------------------------------------------------------

FIG5_AXES = {"mu": (0.1, 0.25), "lambda": (0.25, 5), "timer": (1, 5, 100),
             "block_size": tuple(range(1, 11)), "miners": (1, 10)}
FIG3_AXES = {"mu": (0.1, 0.25, 5), "lambda": (0.1, 0.2, 0.25), "timer": (1, 100),
             "block_size": tuple(range(1, 11)), "miners": (1,)}
FIG4_AXES = {"mu": (0.1, 0.25, 5), "lambda": (0.1, 0.2, 0.25), "timer": (1, 100),
             "block_size": tuple(range(1, 11)), "miners": (1, 10)}
PRESETS = {"fig3": FIG3_AXES, "fig4": FIG4_AXES, "fig5": FIG5_AXES}

REPORT_COLUMNS = ("mu", "lambda", "miners", "queue_size", "block_size", "timer",
                  "model_t_q", "sim_t_q", "sim_t_q_ci", "abs_err_t_q", "rel_err_t_q",
                  "model_t_bc", "sim_t_bc", "rel_err_t_bc", "model_t_bc_no_t_bg",
                  "rel_err_t_bc_no_t_bg", "p_fork", "sim_fork_rate", "sim_drop_count",
                  "model_diag", "flags")


@dataclass
class ComparisonReport:
    preset: str
    rows: list
    summary: dict
    optima: list = field(default_factory=list)

    def to_json(self) -> str:
        clean = lambda rows: [{k: _jsonable(v) for k, v in r.items()} for r in rows]
        return json.dumps({"preset": self.preset, "summary": self.summary,
                           "optima": clean(self.optima), "rows": clean(self.rows)},
                          indent=1, sort_keys=True)

    def cells(self, **where):
        return [r for r in self.rows if all(r[k] == v for k, v in where.items())]


def _compare_cell(args):
    p, seeds, sim_time, variant = args
    model = evaluate_model(p, variant=variant)
    sim = evaluate_simulator(p, seeds, sim_time)
    row = {"mu": p.mu, "lambda": p.lam, "miners": p.miners, "queue_size": p.queue_size,
           "block_size": p.block_size_tx, "timer": p.timer,
           "model_t_q": model["t_q"], "sim_t_q": sim["t_q"], "sim_t_q_ci": sim["t_q_ci"],
           "model_t_bc": model["t_bc"], "sim_t_bc": sim["t_bc"], "p_fork": model["p_fork"],
           "sim_fork_rate": sim["fork_rate"], "sim_drop_count": sim["drop_count"],
           "model_diag": model["diag"]}
    row["abs_err_t_q"] = abs(row["model_t_q"] - row["sim_t_q"])
    row["rel_err_t_q"] = row["abs_err_t_q"] / row["sim_t_q"]
    row["rel_err_t_bc"] = abs(row["model_t_bc"] - row["sim_t_bc"]) / row["sim_t_bc"]
    # the latency sum adds the mining time on top of a pool delay that already covers it
    no_bg = (model["t_q"] + model["t_bp"]) / (1.0 - model["p_fork"])
    row["model_t_bc_no_t_bg"] = no_bg
    row["rel_err_t_bc_no_t_bg"] = abs(no_bg - row["sim_t_bc"]) / row["sim_t_bc"]
    flags = []
    if "saturated" in model["diag"]:
        flags.append("saturated")
    if "model-unstable" in model["diag"]:
        flags.append("model-unstable")
    if p.miners > 1 and p.timer <= 5:
        flags.append("fork-timer-divergence")
    row["flags"] = ";".join(flags)
    return row


def _summary(rows):
    out = {}
    for key in sorted({(r["timer"], r["miners"]) for r in rows}):
        errs = np.array([r["rel_err_t_q"] for r in rows if (r["timer"], r["miners"]) == key])
        errs = errs[np.isfinite(errs)]
        name = f"timer={key[0]:g},miners={key[1]}"
        if len(errs) == 0:
            out[name] = {"cells": 0}
            continue
        q = np.quantile(errs, [0.5, 0.9, 1.0])
        out[name] = {"cells": int(len(errs)), "mean": float(errs.mean()), "median": float(q[0]),
                     "p90": float(q[1]), "max": float(q[2])}
    return out


def _optimum_cell(args):
    p, seeds, sim_time, sim_brute_force = args
    rec = {"mu": p.mu, "lambda": p.lam, "miners": p.miners, "timer": p.timer}
    try:
        opt = optimize_block_size(p)
        rec["b_star"] = opt.b_star
        rec["b_star_continuous"] = opt.b_star_continuous
    except Exception as exc:  # recorded, the grid goes on
        rec["b_star"] = None
        rec["error"] = str(exc)
        return rec
    b_model, _ = brute_force_block_size(p, evaluator="model")
    rec["b_opt_model"] = b_model
    if sim_brute_force:
        b_sim, table = brute_force_block_size(p, evaluator="simulator", seeds=seeds,
                                              sim_time=sim_time)
        rec["b_opt_sim"] = b_sim
        rec["gap_ratio"] = table[opt.b_star] / table[b_sim]
    return rec


def validate_preset(preset: str, seeds=(1, 2, 3), sim_time: float = 100_000.0, jobs: int = 1,
                    variant: str = OCCUPANCY) -> ComparisonReport:
    """Run a figure preset on both backends and compare them cell by cell.

    ``fig4`` additionally brute-forces the block size by simulation for each
    setting and reports the latency ratio of the surrogate optimum to it.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    axes = PRESETS[preset]
    spec = SweepSpec(base=reference_params(), axes=axes, backends="both", seeds=tuple(seeds))
    cells = [(p, tuple(seeds), sim_time, variant) for p in spec.scenarios()]
    rows = _pmap(_compare_cell, cells, jobs)
    optima = []
    if preset in ("fig3", "fig4"):
        settings = SweepSpec(base=reference_params(),
                             axes={k: v for k, v in axes.items() if k != "block_size"}).scenarios()
        sim_seeds = tuple(seeds) if len(seeds) >= 5 else tuple(range(1, 6))
        optima = _pmap(_optimum_cell, [(p, sim_seeds, sim_time, preset == "fig4") for p in settings],
                       jobs)
    return ComparisonReport(preset, rows, _summary(rows), optima)


def render_report_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    write_rows(report.rows, buf, REPORT_COLUMNS)
    return buf.getvalue()
