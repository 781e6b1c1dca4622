"""Discrete-event simulation of a PoW transaction pool with forks.

Transactions arrive as a Poisson process into a shared pool of capacity
``K`` (the block being mined still occupies the pool). A block cycle starts at
every mining completion: the block is formed as soon as ``b`` transactions are
waiting or when the timer ``tau`` fires with at least one transaction. All
``M`` miners mine the same candidate; the first to finish wins and its block
propagates for ``block_bits / C`` seconds. Any other miner finishing inside
that window forks the chain.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from .params import ScenarioParams, block_bits

ARRIVAL, TIMER, MINED, PROPAGATED = "TX_ARRIVAL", "TIMER", "MINING_DONE", "PROPAGATION_DONE"
BLOCK_FORMED = "BLOCK_FORMED"

RETURN_TO_FRONT = "return-to-pool-front"
DISCARD = "discard"
LOSER_POLICIES = (RETURN_TO_FRONT, DISCARD)
SHARED, INDEPENDENT = "shared", "independent"
CANDIDATE_POLICIES = (SHARED, INDEPENDENT)

CI_BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    scenario: ScenarioParams
    sim_time: float = 100_000.0
    seed: int = 0
    forks_enabled: bool = True
    warmup: float | None = None  # defaults to 5% of sim_time
    loser_tx_policy: str = RETURN_TO_FRONT
    candidate_policy: str = SHARED

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.05 * self.sim_time)
        if not self.sim_time > self.warmup >= 0:
            raise ValueError(f"need sim_time > warmup >= 0 (got {self.sim_time}, {self.warmup})")
        if self.loser_tx_policy not in LOSER_POLICIES:
            raise ValueError(f"loser_tx_policy must be one of {LOSER_POLICIES}")
        if self.candidate_policy not in CANDIDATE_POLICIES:
            raise ValueError(f"candidate_policy must be one of {CANDIDATE_POLICIES}")


@dataclass
class SimResult:
    mean_pool_delay: float
    mean_confirmation_latency: float
    fork_rate: float
    drop_count: int
    blocks_mined: int
    block_size_histogram: list
    transactions_committed: int
    ci_half_width: float
    arrivals: int = 0
    arrivals_accepted: int = 0
    pool_residual: int = 0
    in_flight: int = 0
    forks: int = 0
    mean_fork_valid_tx: float = math.nan
    delay_samples: int = 0
    event_counts: dict = field(default_factory=dict)


def _batch_ci(samples, batches=CI_BATCHES) -> float:
    if len(samples) < 2 * batches:
        return math.nan
    means = [float(np.mean(chunk)) for chunk in np.array_split(np.asarray(samples), batches)]
    return float(stats.t.ppf(0.975, batches - 1) * np.std(means, ddof=1) / math.sqrt(batches))


def run_simulation(config: SimConfig, trace=None) -> SimResult:
    """Run one replication; ``trace`` is an optional text stream for a TSV event log."""
    p = config.scenario
    rng = random.Random(config.seed)
    expo = rng.expovariate
    mu, lam, M = p.mu, p.lam, p.miners
    K, b, tau = p.queue_size, p.block_size_tx, p.timer
    horizon, warmup = config.sim_time, config.warmup
    forks_on = config.forks_enabled and M > 1
    give_back = config.loser_tx_policy == RETURN_TO_FRONT
    independent = config.candidate_policy == INDEPENDENT
    h, t, C = p.header_bits, p.tx_bits, p.capacity_bps

    events = []
    seq = 0
    pool = deque()  # arrival times of transactions not yet in a block
    block = []  # arrival times of the transactions being mined
    mining = False
    timer_token = 0
    timer_armed = False
    block_id = 0
    avail_at_formation = 0

    counts = Counter()
    hist = [0] * (b + 1)
    arrivals = accepted = dropped = committed = forks = blocks = 0
    propagating = 0
    fork_valid = []
    pool_delays = []
    conf_sum = 0.0
    conf_n = 0

    def log(now, kind, miner="-", bid="-"):
        trace.write(f"{now:.9g}\t{kind}\t{miner}\t{len(pool) + len(block)}\t{bid}\n")

    def push(time, kind, payload=None):
        nonlocal seq
        seq += 1
        heapq.heappush(events, (time, seq, kind, payload))

    def arm_timer(now):
        nonlocal timer_armed
        timer_armed = True
        push(now + tau, TIMER, timer_token)

    def form_block(now):
        nonlocal mining, block, timer_token, timer_armed, block_id, avail_at_formation
        n = min(len(pool), b)
        avail_at_formation = len(pool)
        block = [pool.popleft() for _ in range(n)]
        mining = True
        timer_token += 1
        timer_armed = False
        block_id += 1
        draws = [expo(lam) for _ in range(M)]
        win = min(range(M), key=draws.__getitem__)
        push(now + draws[win], MINED, (block_id, win, draws))
        counts[BLOCK_FORMED] += 1
        if trace is not None:
            log(now, BLOCK_FORMED, "-", block_id)

    def start_cycle(now):
        if len(pool) >= b:
            form_block(now)
        else:
            arm_timer(now)

    push(expo(mu), ARRIVAL)
    arm_timer(0.0)

    while events:
        now, _, kind, payload = heapq.heappop(events)
        if now > horizon:
            break
        counts[kind] += 1

        if kind == ARRIVAL:
            arrivals += 1
            push(now + expo(mu), ARRIVAL)
            if len(pool) + len(block) >= K:
                dropped += 1
            else:
                accepted += 1
                pool.append(now)
                if not mining:
                    if len(pool) >= b:
                        form_block(now)
                    elif not timer_armed:
                        arm_timer(now)
            if trace is not None:
                log(now, kind)

        elif kind == TIMER:
            if payload != timer_token or mining:
                continue
            timer_armed = False
            if pool:
                form_block(now)
            # an empty pool waits for the next arrival to re-arm the timer
            if trace is not None:
                log(now, kind)

        elif kind == MINED:
            bid, win, draws = payload
            size = len(block)
            blocks += 1
            hist[size] += 1
            t_bp = block_bits(size, h, t) / C
            forked = forks_on and any(d - draws[win] < t_bp for i, d in enumerate(draws) if i != win)
            done = block
            if forked:
                forks += 1
                if independent:
                    loser = set(rng.sample(range(avail_at_formation), size))
                    survivors = [i for i in range(size) if i not in loser]
                else:
                    survivors = []
                fork_valid.append(len(survivors))
                if give_back:
                    done = [block[i] for i in survivors]
                    keep = set(survivors)
                    for i in reversed(range(size)):
                        if i not in keep:
                            pool.appendleft(block[i])
            for a in done:
                if a >= warmup:
                    pool_delays.append(now - a)
            block = []
            mining = False
            if trace is not None:
                log(now, kind, win, bid)
            if done:
                propagating += len(done)
                push(now + t_bp, PROPAGATED, (bid, done))
            start_cycle(now)

        else:  # PROPAGATED
            bid, done = payload
            propagating -= len(done)
            committed += len(done)
            for a in done:
                if a >= warmup:
                    conf_sum += now - a
                    conf_n += 1
            if trace is not None:
                log(now, kind, "-", bid)

    return SimResult(
        mean_pool_delay=float(np.mean(pool_delays)) if pool_delays else math.nan,
        mean_confirmation_latency=conf_sum / conf_n if conf_n else math.nan,
        fork_rate=forks / blocks if blocks else 0.0,
        drop_count=dropped,
        blocks_mined=blocks,
        block_size_histogram=hist,
        transactions_committed=committed,
        ci_half_width=_batch_ci(pool_delays),
        arrivals=arrivals,
        arrivals_accepted=accepted,
        pool_residual=len(pool),
        in_flight=len(block) + propagating,
        forks=forks,
        mean_fork_valid_tx=float(np.mean(fork_valid)) if fork_valid else math.nan,
        delay_samples=len(pool_delays),
        event_counts=dict(sorted(counts.items())),
    )


SUMMARY_METRICS = ("mean_pool_delay", "mean_confirmation_latency", "fork_rate", "drop_count",
                   "blocks_mined", "transactions_committed")


@dataclass
class ReplicationSummary:
    """Across-replication mean and 95% confidence half-width per metric."""

    mean: dict
    ci: dict
    runs: list
    seeds: list

    def interval(self, metric):
        m, w = self.mean[metric], self.ci[metric]
        return m - w, m + w


def run_replications(config: SimConfig, seeds) -> ReplicationSummary:
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds for a confidence interval")
    runs = [run_simulation(_with_seed(config, s)) for s in seeds]
    return summarize(runs, seeds)


def summarize(runs, seeds) -> ReplicationSummary:
    n = len(runs)
    tq = stats.t.ppf(0.975, n - 1)
    mean, ci = {}, {}
    for name in SUMMARY_METRICS:
        vals = np.array([getattr(r, name) for r in runs], dtype=float)
        vals = vals[~np.isnan(vals)]
        if len(vals) == 0:
            mean[name], ci[name] = math.nan, math.nan
            continue
        mean[name] = float(vals.mean())
        if len(vals) < 2:
            ci[name] = math.nan
        elif np.ptp(vals) == 0:
            ci[name] = 0.0
        else:
            ci[name] = float(tq * vals.std(ddof=1) / math.sqrt(len(vals)))
    return ReplicationSummary(mean, ci, runs, list(seeds))


def _with_seed(config: SimConfig, seed) -> SimConfig:
    kw = {f.name: getattr(config, f.name) for f in fields(config)}
    kw["seed"] = seed
    return SimConfig(**kw)
