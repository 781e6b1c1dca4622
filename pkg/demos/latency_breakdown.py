# %% [markdown]
# # Where confirmation time goes
#
# Confirmation latency is the sum of three delays (waiting in the pool,
# mining, propagation) divided by the chance that the block is not orphaned.

# %%
from powlat import confirmation_latency, fork_probability, reference_params

for miners in (1, 10):
    for b in (1, 5, 10):
        lat = confirmation_latency(reference_params(mu=0.25, lam=0.25, miners=miners, block_size_tx=b,
                                                 timer=100))
        print(f"M={miners:2d} b={b:2d}  T_q={lat.t_q:8.3f}  T_bg={lat.t_bg:5.2f}  "
              f"T_bp={lat.t_bp:.4f}  p_fork={lat.p_fork:.5f}  T_BC={lat.t_bc:8.3f}")

# %% [markdown]
# Forking grows with the number of competing miners and with propagation
# time. A single miner never forks.

# %%
for m in (1, 2, 5, 10, 50):
    print(m, [round(fork_probability(0.25, m, t), 5) for t in (0.001, 0.01, 0.1, 1.0)])

# %% [markdown]
# Slow links change the picture: at 100 kbps a 10-transaction block takes
# 0.7 s to reach the network, and the fork factor starts to matter.

# %%
slow = reference_params(mu=0.25, lam=0.25, miners=10, block_size_tx=10, capacity_bps=1e5)
lat = confirmation_latency(slow)
print({k: round(float(v), 4) for k, v in lat.as_dict().items()})
