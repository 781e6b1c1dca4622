"""Confirmation latency of PoW blockchains: batch-service queue model,
block size optimization and a discrete-event simulator."""

from .latency import (LatencyBreakdown, confirmation_latency, fork_probability, mining_delay,
                      propagation_delay)
from .optimize import (OptimizationResult, Polynomial, approx_confirmation_latency,
                       brute_force_block_size, lagrange_fit, optimize_block_size)
from .params import (InvalidParameterError, ScenarioParams, block_bits, load_scenario,
                     params_from_dict, reference_params, validate_params)
from .queue import (ModelUnstableError, QueueSolution, TransitionMatrix, build_transition_matrix,
                    mean_queue_delay, solve_embedded_chain, solve_queue, steady_state)
from .sim import SimConfig, SimResult, run_replications, run_simulation

__version__ = "0.1.0"
