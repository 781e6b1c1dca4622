"""Exit criteria. Each test records a PASS/FAIL line shown in the terminal summary."""

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record
from oracles import mm1k
from powlat.harness import validate_preset
from powlat.latency import confirmation_latency, fork_probability
from powlat.optimize import brute_force_block_size, optimize_block_size
from powlat.params import ScenarioParams, reference_params, validate_params
from powlat.queue import build_transition_matrix, solve_embedded_chain, steady_state
from powlat.sim import SimConfig, run_replications, run_simulation

RATES = (0.1, 0.25, 0.5, 1, 2.5, 5, 10)


@pytest.fixture(scope="module")
def fig5_report():
    start = time.perf_counter()
    rep = validate_preset("fig5", seeds=(1, 2, 3), sim_time=100_000)
    return rep, time.perf_counter() - start


def random_scenario(rng):
    K = int(rng.integers(1, 31))
    b = int(rng.integers(1, K + 1))
    return validate_params(ScenarioParams(
        mu=float(rng.choice(RATES)), lam=float(rng.choice(RATES)), miners=int(rng.integers(1, 11)),
        queue_size=K, block_size_tx=b, timer=float(rng.choice((0.1, 1, 5, 10, 100))),
        fork_valid_tx=int(rng.integers(0, b + 1)),
        service_rate_mode=str(rng.choice(("aggregate", "per-miner")))))


def test_1_structural_invariants():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_row = worst_fix = worst_norm = 0.0
    for _ in range(200):
        p = random_scenario(rng)
        p_fork = float(rng.uniform(0, 0.5))
        tm = build_transition_matrix(p, p_fork)
        pi_d = solve_embedded_chain(tm)
        sol = steady_state(p, tm, pi_d, p_fork)
        worst_row = max(worst_row, np.abs(tm.entries.sum(axis=1) - 1).max())
        worst_fix = max(worst_fix, np.abs(pi_d @ tm.entries - pi_d).max())
        worst_norm = max(worst_norm, abs(sol.pi_steady.sum() - 1))
    elapsed = time.perf_counter() - start
    ok = worst_row <= 1e-9 and worst_fix <= 1e-9 and worst_norm <= 1e-9 and elapsed < 10
    record(1, "structural invariants", ok,
           f"row {worst_row:.1e}, fixed point {worst_fix:.1e}, norm {worst_norm:.1e}, {elapsed:.2f}s")
    assert ok


def test_2_mm1k_oracle_equivalence():
    start = time.perf_counter()
    errs = {}
    for rho in (0.2, 0.4, 0.8):
        lam = 0.1 / rho
        p = reference_params(mu=0.1, lam=lam, block_size_tx=1, miners=1)
        t_q = confirmation_latency(p, timer_disabled=True).t_q
        errs[rho] = abs(t_q - mm1k(0.1, lam, 10)[1]) / mm1k(0.1, lam, 10)[1]
    elapsed = time.perf_counter() - start
    ok = max(errs.values()) <= 0.01 and elapsed < 1
    record(2, "M/M/1/K oracle equivalence", ok,
           ", ".join(f"rho={r}: {e:.1e}" for r, e in errs.items()) + f", {elapsed:.2f}s")
    assert ok


def test_3_simulator_vs_oracle():
    start = time.perf_counter()
    p = reference_params(mu=0.1, lam=0.25, block_size_tx=1, miners=1, timer=100)
    agg = run_replications(SimConfig(p, sim_time=100_000), [1, 2, 3, 4, 5])
    lo, hi = agg.interval("mean_pool_delay")
    w = mm1k(0.1, 0.25, 10)[1]
    elapsed = time.perf_counter() - start
    ok = lo <= w <= hi and elapsed < 30
    record(3, "simulator vs M/M/1/K", ok, f"CI [{lo:.3f}, {hi:.3f}] vs {w:.4f}, {elapsed:.1f}s")
    assert ok


def test_4_model_vs_simulation_fig5(fig5_report):
    rep, elapsed = fig5_report
    cells = [r for r in rep.cells(miners=1, timer=100.0) if "saturated" not in r["flags"]]
    worst = max(r["rel_err_t_q"] for r in cells)
    ok = len(cells) > 0 and worst <= 0.15 and elapsed < 600
    record(4, "model vs simulation (M=1, tau=100)", ok,
           f"{len(cells)} cells, max rel T_q error {worst:.3f}, grid {elapsed:.0f}s")
    assert ok


def test_5_optimizer_consistency():
    start = time.perf_counter()
    misses = []
    for mu, lam in itertools.product((0.1, 0.25, 5), (0.1, 0.2, 0.25)):
        p = reference_params(mu=mu, lam=lam, miners=1)
        b_star = optimize_block_size(p).b_star
        b_opt, _ = brute_force_block_size(p, timer_disabled=True)
        if b_star != b_opt:
            misses.append(f"(mu={mu}, lam={lam}): {b_star} vs {b_opt}")
    elapsed = time.perf_counter() - start
    ok = not misses and elapsed < 30
    record(5, "optimizer matches brute force", ok,
           f"{9 - len(misses)}/9 settings match, {elapsed:.1f}s" + ("; " + "; ".join(misses) if misses else ""))
    assert ok


def test_6_fork_timer_divergence(fig5_report):
    rep, _ = fig5_report
    low = np.mean([r["rel_err_t_q"] for r in rep.cells(miners=10, timer=1.0)])
    high = np.mean([r["rel_err_t_q"] for r in rep.cells(miners=10, timer=100.0)])
    ok = low > high
    record(6, "fork/timer divergence reproduced", ok,
           f"mean rel error tau=1: {low:.3f} vs tau=100: {high:.3f}")
    assert ok


def test_7_fork_formula_properties():
    ls = np.linspace(0.1, 10, 10)
    ms = np.arange(2, 12)
    ts = np.linspace(1e-3, 0.5, 10)
    grid = np.array([[[fork_probability(l, m, t) for t in ts] for m in ms] for l in ls])
    # nondecreasing everywhere; strictly increasing until the value rounds to 1.0
    monotone = True
    for ax in range(3):
        step = np.diff(grid, axis=ax)
        below = np.take(grid, range(grid.shape[ax] - 1), axis=ax) < 1 - 1e-12
        monotone &= bool(np.all(step >= 0) and np.all(step[below] > 0))
    single = all(fork_probability(l, 1, t) == 0 for l in ls for t in ts)
    p = reference_params(mu=2.5, lam=5, miners=1, block_size_tx=5, timer=1)
    sim_zero = all(run_simulation(SimConfig(p, sim_time=10_000, seed=s)).fork_rate == 0
                   for s in (0, 1, 17, 2**40))
    ok = monotone and single and sim_zero
    record(7, "fork formula properties", ok,
           f"monotone={monotone}, p_fork(M=1)=0: {single}, sim fork_rate(M=1)=0: {sim_zero}")
    assert ok


CLI_RUNS = [
    ["model", "--mu", "0.25", "--lambda", "5", "--miners", "10", "--block-size", "6", "--timer", "5"],
    ["simulate", "--seed", "42", "--replications", "3", "--miners", "10", "--mu", "0.5",
     "--block-size", "4", "--sim-time", "5000"],
    ["optimize", "--mu", "5", "--lambda", "0.2", "--format", "jsonl"],
    ["validate", "fig5", "--sim-time", "500", "--replications", "2", "--format", "csv"],
]


def test_8_cli_determinism():
    same = []
    for argv in CLI_RUNS:
        cmd = [sys.executable, "-m", "powlat", *argv]
        a = subprocess.run(cmd, capture_output=True)
        b = subprocess.run(cmd, capture_output=True)
        same.append(a.stdout == b.stdout and a.returncode == b.returncode and len(a.stdout) > 0)
    ok = all(same)
    record(8, "CLI determinism", ok, f"{sum(same)}/{len(same)} invocations byte-identical")
    assert ok
