# %% [markdown]
# # FMM against the O(N^2) sum
#
# Random vortex particles in the unit square, compared with the brute-force
# regularized Biot-Savart sum for a few expansion orders.

# %%
import time

import numpy as np

from fmmoverlap import FmmConfig, compute_velocities, direct_sum_all, uniform_random

particles = uniform_random(2048, seed=1)
levels = 3
params = FmmConfig(levels=levels).kernel_params()
print(f"N = {len(particles)}, levels = {levels}, sigma = {params.sigma:.5f}")

# %%
t0 = time.perf_counter()
exact = direct_sum_all(particles, params)
print(f"direct sum: {time.perf_counter() - t0:.2f} s")

# %%
for order in (2, 4, 8, 12, 15, 20):
    t0 = time.perf_counter()
    v, report = compute_velocities(particles, FmmConfig(levels=levels, order=order))
    elapsed = time.perf_counter() - t0
    rel = np.abs(v - exact) / np.abs(exact)
    print(f"t = {order:2d}  max rel = {rel.max():.2e}  rms rel = {np.sqrt(np.mean(rel**2)):.2e}"
          f"  flops = {report.total_flops():.3e}  ({elapsed:.2f} s)")

# %% [markdown]
# Each extra term buys roughly a constant factor in accuracy, which is what
# a geometric series with ratio below one should do. The flop count grows
# slowly with t because the near field dominates at this size.

# %%
_, report = compute_velocities(particles, FmmConfig(levels=levels, order=15))
for stage, st in report.stages.items():
    print(f"stage {stage:2d}: {st.flops:12d} flops over {st.tasks:4d} tasks")
