# %% [markdown]
# # The transaction pool as a batch-service queue
#
# Transactions arrive at rate mu into a pool holding at most K of them.
# Blocks of up to b transactions leave at the mining rate, and a timer
# forces a smaller block out if the pool is slow to fill.

# %%
import numpy as np

from powlat import (build_transition_matrix, solve_embedded_chain, solve_queue, steady_state,
                    reference_params)

p = reference_params(mu=0.25, lam=0.5, block_size_tx=4, timer=5)
tm = build_transition_matrix(p)
print("row sums:", np.round(tm.entries.sum(axis=1), 12))

# %% [markdown]
# The chain is observed at departures. Its stationary vector turns into a
# time-average occupancy through the mean departure interval.

# %%
pi_d = solve_embedded_chain(tm)
sol = steady_state(p, tm, pi_d)
for k, (a, b) in enumerate(zip(pi_d, sol.pi_steady)):
    print(f"{k:2d}  departure {a:.4f}  time-average {b:.4f}")
print(f"mean departure interval {sol.t_d:.3f}s, mean pool delay {sol.t_q:.3f}s")

# %% [markdown]
# With b=1 and a timer far beyond any service time, the model collapses to the
# classical M/M/1/K queue, whose closed form is easy to check by hand.

# %%
mm1k = reference_params(mu=0.1, lam=0.25, block_size_tx=1, timer=100)
rho = 0.1 / 0.25
w = rho ** np.arange(11)
w /= w.sum()
closed = np.dot(np.arange(11), w) / (0.1 * (1 - w[-1]))
print(f"model {solve_queue(mm1k).t_q:.4f}s vs closed form {closed:.4f}s")
