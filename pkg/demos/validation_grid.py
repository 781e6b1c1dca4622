# %% [markdown]
# # Model against simulation over a grid
#
# The validation preset sweeps transaction rate, block size, miners and timer.
# Each cell records the relative error in pool delay. A short simulation
# horizon keeps this demo quick; the full check uses 1e5 seconds.

# %%
from powlat.harness import validate_preset

rep = validate_preset("fig5", seeds=(1, 2), sim_time=5_000)
for key, stats in rep.summary.items():
    print(key, {k: round(v, 3) for k, v in stats.items()})

# %% [markdown]
# With one miner and a long timer the two agree to a few percent. The largest
# gaps come with ten fast miners, where forks are frequent. The chain counts a
# forked departure as serving only part of a block. In the simulator the
# winning copy still commits every transaction, so the model overestimates the wait.

# %%
worst = sorted(rep.rows, key=lambda r: -r["rel_err_t_q"])[:5]
for r in worst:
    print(r["mu"], r["block_size"], r["miners"], r["timer"], round(r["rel_err_t_q"], 3), r["flags"])
