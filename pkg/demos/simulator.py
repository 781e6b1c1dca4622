# %% [markdown]
# # Discrete-event simulation of the pool and the miners
#
# The simulator keeps one exponential clock per miner, a timer for partial
# blocks and a finite pool. Forks happen when a second miner finishes within
# the propagation window of the winner.

# %%
import io

from powlat import SimConfig, run_replications, run_simulation, solve_queue, reference_params

p = reference_params(mu=0.1, lam=0.25, block_size_tx=1, timer=100)
agg = run_replications(SimConfig(p, sim_time=100_000), [1, 2, 3, 4, 5])
lo, hi = agg.interval("mean_pool_delay")
print(f"simulated pool delay {agg.mean['mean_pool_delay']:.3f}s, 95% CI [{lo:.3f}, {hi:.3f}]")
print(f"model {solve_queue(p).t_q:.3f}s")

# %% [markdown]
# A short trace shows the event sequence: arrivals, block formation, mining
# and propagation.

# %%
buf = io.StringIO()
run_simulation(SimConfig(reference_params(mu=0.5, lam=0.5, miners=10, block_size_tx=3, timer=5),
                         sim_time=30, seed=4), trace=buf)
print(buf.getvalue()[:1200])

# %% [markdown]
# Fork rates with many miners and a slow network.

# %%
fp = reference_params(mu=0.25, lam=0.25, miners=10, block_size_tx=10, timer=1000, capacity_bps=1e5)
r = run_simulation(SimConfig(fp, sim_time=100_000, seed=2))
print(f"blocks {r.blocks_mined}, forks {r.forks}, fork rate {r.fork_rate:.4f}")
