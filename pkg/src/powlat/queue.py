"""Finite batch-service queue (M/M^b/1/K) for the transaction pool.

The state is the number of transactions in the pool right after a block
departure (mining completion). Transactions stay in the pool until the block
that contains them is mined, so occupancy counts the block being mined too.

A cycle starting from departure state ``i`` has two phases:

* formation: if ``i < b`` the miner waits for ``b - i`` more arrivals or for
  the timer to expire, whichever comes first;
* mining: an exponential time with rate ``lambda_s`` during which arrivals keep
  joining the pool (up to ``K``); at completion ``s(m)`` transactions leave,
  where ``m`` is the occupancy when the block was formed.

The mining kernel is the geometric race between arrivals and the block, and
the embedded chain is the formation kernel composed with it. Time averages
follow from level crossing: an arrival that finds ``k`` in the pool happens in
a cycle exactly when the cycle starts at or below ``k`` and ends above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .params import ScenarioParams

OCCUPANCY = "occupancy"
ARRIVALS = "arrivals"
MODEL_VARIANTS = (OCCUPANCY, ARRIVALS)

NEG_MASS_TOL = 1e-6
# below this, negative mass is floating-point cancellation and is zeroed silently
ROUNDOFF = 1e-12
# pool-full probability above which a scenario is reported as saturated
SATURATION_BLOCKING = 0.05

CLAMPED = "negative-mass-clamped"
SATURATED = "saturated"


class QueueModelError(ArithmeticError):
    pass


class DegenerateChainError(QueueModelError):
    pass


class SingularSystemError(QueueModelError):
    pass


class ModelUnstableError(QueueModelError):
    """The steady-state construction produced materially negative mass."""

    def __init__(self, msg, solution=None):
        super().__init__(f"model-unstable: {msg}")
        self.solution = solution


class DivisionDegenerateError(QueueModelError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    """Embedded departure chain plus the two kernels it is built from.

    ``entries`` is the chain that gets solved. ``mining[m, j]`` is the
    probability of leaving ``j`` behind when a block is mined from occupancy
    ``m``; ``formation[i, m]`` the probability that a cycle starting at ``i``
    forms its block at occupancy ``m``.
    """

    entries: np.ndarray
    mining: np.ndarray
    formation: np.ndarray
    served: np.ndarray  # expected survivors of a departure, real valued
    served_int: np.ndarray  # rounded, used for state bookkeeping

    @property
    def K(self) -> int:
        return self.entries.shape[0] - 1


@dataclass(frozen=True)
class QueueSolution:
    pi_departure: np.ndarray
    pi_steady: np.ndarray
    t_d: float
    t_q: float
    diagnostics: tuple = field(default=())

    @property
    def blocking(self) -> float:
        return float(self.pi_steady[-1])

    @property
    def saturated(self) -> bool:
        return SATURATED in self.diagnostics


def poisson_pmf(n: int, mean: float) -> float:
    """P(N = n) for N ~ Poisson(mean), evaluated in log space."""
    if n < 0:
        return 0.0
    if mean == 0:
        return 1.0 if n == 0 else 0.0
    if math.isinf(mean):
        return 0.0
    return math.exp(-mean + n * math.log(mean) - math.lgamma(n + 1))


def timer_expiry_prob(i: int, b: int, mu: float, tau: float) -> float:
    """Probability the timer fires before the block fills, from state ``i``."""
    if i >= b:
        return 0.0
    mean = mu * tau
    return min(1.0, math.fsum(poisson_pmf(n, mean) for n in range(b - i)))


def expected_formation_time(i: int, b: int, mu: float, tau: float) -> float:
    """E[min(Erlang(b - i, mu), tau)], the mean wait before a block forms."""
    if i >= b:
        return 0.0
    need = b - i
    if math.isinf(tau):
        return need / mu
    # integral of P(N(s) <= need - 1) over [0, tau]
    return float(np.sum(gammainc(np.arange(1, need + 1), mu * tau))) / mu


def expected_served(i: int, params: ScenarioParams, p_fork: float) -> float:
    """Transactions that leave the pool at a departure from occupancy ``i``."""
    b = params.block_size_tx
    return (1.0 - p_fork) * min(i, b) + p_fork * params.fork_valid_tx


def _served_counts(params: ScenarioParams, p_fork: float):
    K, b = params.queue_size, params.block_size_tx
    real = np.array([expected_served(i, params, p_fork) for i in range(K + 1)])
    # round half up; a block can never release more than it holds
    rounded = np.floor(real + 0.5 + 1e-12).astype(int)
    cap = np.minimum(np.arange(K + 1), b)
    return real, np.clip(rounded, 0, cap)


def mining_kernel(params: ScenarioParams, served_int, service_rate=None) -> np.ndarray:
    """Geometric-race transition probabilities for a block mined from each occupancy."""
    K = params.queue_size
    ls = params.service_rate if service_rate is None else service_rate
    q = ls / (ls + params.mu)
    r = params.mu / (ls + params.mu)
    P = np.zeros((K + 1, K + 1))
    for m in range(K + 1):
        s = int(served_int[m])
        start, edge = m - s, K - s
        steps = np.arange(edge - start)
        P[m, start:edge] = q * r ** steps
        # arrivals beyond the pool capacity are lost; the complement piles on the edge
        P[m, edge] = 1.0 - P[m, :edge].sum()
    return P


def formation_kernel(params: ScenarioParams, timer_disabled: bool = False) -> np.ndarray:
    K, b, mu = params.queue_size, params.block_size_tx, params.mu
    tau = math.inf if timer_disabled else params.timer
    F = np.zeros((K + 1, K + 1))
    for i in range(K + 1):
        if i >= b:
            F[i, i] = 1.0
            continue
        for n in range(b - i):
            F[i, i + n] = poisson_pmf(n, mu * tau)
        F[i, b] = max(0.0, 1.0 - timer_expiry_prob(i, b, mu, tau))
    return F


def build_transition_matrix(params: ScenarioParams, p_fork: float = 0.0,
                            timer_disabled: bool = False) -> TransitionMatrix:
    served, served_int = _served_counts(params, p_fork)
    mining = mining_kernel(params, served_int)
    formation = formation_kernel(params, timer_disabled)
    entries = formation @ mining
    if not np.all(np.isfinite(entries)):
        raise DegenerateChainError("non-finite transition probabilities")
    sums = entries.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9) or np.any(entries < -1e-15):
        raise DegenerateChainError(f"rows do not form distributions (sums {sums})")
    return TransitionMatrix(np.clip(entries, 0.0, 1.0), mining, formation, served, served_int)


def solve_embedded_chain(P) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix.

    One balance equation is replaced by the normalization constraint and the
    system is solved directly. Reducible chains (no unique solution) raise
    :class:`SingularSystemError`.
    """
    P = np.asarray(getattr(P, "entries", P), dtype=float)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if np.linalg.cond(A) > 1e12:
        raise SingularSystemError("chain is reducible: stationary distribution is not unique")
    pi = np.linalg.solve(A, rhs)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < -1e-9):
        raise SingularSystemError("solution has negative mass")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _exceed_prob(mining: np.ndarray, m: int, k: int, s: int) -> float:
    """Mass of row ``m`` on post-departure states ``j`` with ``j + s > k``."""
    K = mining.shape[0] - 1
    lo, hi = max(k - s + 1, 0), K - s
    if lo > hi:
        return 0.0
    return float(mining[m, lo:hi + 1].sum())


def steady_state(params: ScenarioParams, tm: TransitionMatrix, pi_d, p_fork: float = 0.0,
                 timer_disabled: bool = False, variant: str = OCCUPANCY) -> QueueSolution:
    """Time-average pool distribution from the departure distribution.

    ``variant`` selects how the served count inside the timer-expiry branch
    is indexed: by the occupancy the block was formed at (``"occupancy"``) or
    by the number of arrivals seen during the timer window (``"arrivals"``).
    """
    if variant not in MODEL_VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}")
    K, b, mu = params.queue_size, params.block_size_tx, params.mu
    tau = math.inf if timer_disabled else params.timer
    ls = params.service_rate
    pi_d = np.asarray(pi_d, dtype=float)
    s = tm.served_int

    t_d = sum(pi_d[i] * (expected_formation_time(i, b, mu, tau) + 1.0 / ls) for i in range(K + 1))

    pi = np.zeros(K + 1)
    for k in range(K):
        total = 0.0
        for i in range(k + 1):
            if pi_d[i] == 0.0:
                continue
            acc = 0.0
            for m in np.nonzero(tm.formation[i])[0]:
                w = tm.formation[i, m]
                lim = s[m]
                if variant == ARRIVALS and i < b and m < b:
                    lim = s[m - i]
                acc += w * _exceed_prob(tm.mining, m, k, lim)
            total += pi_d[i] * acc
        pi[k] = total / (mu * t_d)
    pi[K] = 1.0 - pi[:K].sum()
    pi[np.abs(pi) < ROUNDOFF] = 0.0

    diags = []
    worst = pi.min()
    if worst < -NEG_MASS_TOL:
        raw = QueueSolution(pi_d, pi, t_d, math.nan, (CLAMPED,))
        raise ModelUnstableError(f"negative steady-state mass {worst:.3g}", raw)
    if worst < 0:
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        diags.append(CLAMPED)
    if pi[K] > SATURATION_BLOCKING:
        diags.append(SATURATED)
    sol = QueueSolution(pi_d, pi, t_d, math.nan, tuple(diags))
    return QueueSolution(pi_d, pi, t_d, mean_queue_delay(sol, mu), tuple(diags))


def mean_queue_delay(sol, mu: float) -> float:
    """Mean time in the pool by Little's law over accepted arrivals."""
    pi = np.asarray(getattr(sol, "pi_steady", sol), dtype=float)
    accepted = 1.0 - pi[-1]
    if accepted <= 1e-15:
        raise DivisionDegenerateError("pool is always full; no transaction is ever accepted")
    return float(np.dot(np.arange(len(pi)), pi)) / (mu * accepted)


def solve_queue(params: ScenarioParams, p_fork: float = 0.0, timer_disabled: bool = False,
                variant: str = OCCUPANCY) -> QueueSolution:
    """Build, solve and post-process the queue for one scenario."""
    tm = build_transition_matrix(params, p_fork, timer_disabled)
    pi_d = solve_embedded_chain(tm)
    return steady_state(params, tm, pi_d, p_fork, timer_disabled, variant)
