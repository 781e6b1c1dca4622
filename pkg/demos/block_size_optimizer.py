# %% [markdown]
# # Choosing the block size
#
# Solving the chain at every block size is the exact answer. The optimizer
# instead fits a polynomial through a handful of sample sizes and minimizes the
# smooth surrogate with a golden-section search.

# %%
from powlat import brute_force_block_size, optimize_block_size, reference_params

p = reference_params(mu=0.25, lam=0.2, miners=1)
res = optimize_block_size(p)
best, table = brute_force_block_size(p, timer_disabled=True)
print(f"surrogate minimum at b={res.b_star_continuous:.2f}, rounded to {res.b_star}")
print(f"exhaustive search minimum at b={best}")
print("surrogate vs exact latency")
for b, v in res.table:
    print(f"  b={b:2d}  surrogate {v:8.3f}  exact {table[b]:8.3f}")

# %% [markdown]
# Five evenly spread nodes can miss a flat minimum by one position. Here the
# surrogate dips below the truth between nodes 3 and 6. The cost of the miss:

# %%
print(f"lost {table[res.b_star] / table[best] - 1:.1%} against the exhaustive optimum")

# %% [markdown]
# Using more nodes tightens the fit at the cost of more chain solves.

# %%
for n in (3, 5, 7, 10):
    print(n, "nodes ->", optimize_block_size(p, node_budget=n).b_star)
