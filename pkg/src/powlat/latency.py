"""End-to-end transaction confirmation latency."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import ScenarioParams, block_bits
from .queue import OCCUPANCY, QueueSolution, solve_queue


class ForkSaturatedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LatencyBreakdown:
    t_q: float
    t_bg: float
    t_bp: float
    p_fork: float
    t_bc: float
    queue: QueueSolution | None = None

    @property
    def diagnostics(self) -> tuple:
        return self.queue.diagnostics if self.queue is not None else ()

    def as_dict(self) -> dict:
        return {"t_q": self.t_q, "t_bg": self.t_bg, "t_bp": self.t_bp,
                "p_fork": self.p_fork, "t_bc": self.t_bc}


def propagation_delay(b, params: ScenarioParams) -> float:
    """Seconds to push a block of ``b`` transactions through the P2P capacity."""
    return block_bits(b, params.header_bits, params.tx_bits) / params.capacity_bps


def mining_delay(miners: int, lam: float) -> float:
    return 1.0 / (miners * lam)


def fork_probability(lam: float, miners: int, t_bp: float) -> float:
    """Chance another miner finishes while the winning block is still propagating."""
    return -math.expm1(-lam * (miners - 1) * t_bp)


def confirmation_latency(scenario: ScenarioParams, timer_disabled: bool = False,
                         variant: str = OCCUPANCY) -> LatencyBreakdown:
    """Queue, mining and propagation delays inflated by forks.

    Forks reduce the number of transactions a departure actually clears, so the
    fork probability is fed into the queue model before it is solved.
    Raises ``ModelUnstableError`` from the queue model and
    ``ForkSaturatedError`` when a fork is (numerically) certain.
    """
    t_bp = propagation_delay(scenario.block_size_tx, scenario)
    p_fork = fork_probability(scenario.lam, scenario.miners, t_bp)
    if p_fork >= 1 - 1e-12:
        raise ForkSaturatedError(f"fork-saturated: p_fork = {p_fork}")
    t_bg = mining_delay(scenario.miners, scenario.lam)
    sol = solve_queue(scenario, p_fork, timer_disabled, variant)
    t_bc = (sol.t_q + t_bg + t_bp) / (1.0 - p_fork)
    return LatencyBreakdown(sol.t_q, t_bg, t_bp, p_fork, t_bc, sol)
