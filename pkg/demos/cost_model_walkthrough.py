# %% [markdown]
# # Where does the log P term bite?
#
# The runtime model for the parallel FMM has four terms:
#
#     T = a N/P + b log4(P) + c N/(B P) + d N B/P
#
# The `b log4 P` term comes from the coarse tree levels, which have fewer
# cells than processes. This script walks through the numbers at order 15.

# %%
import numpy as np

from fmmoverlap import costmodel

coeffs = costmodel.coefficients(15)
print(f"a = {coeffs.a:.0f}, b = {coeffs.b:.0f}, c = {coeffs.c:.2f}, d = {coeffs.d:.0f}")
print(f"b/d = {coeffs.b / coeffs.d:.2f}")

# %% [markdown]
# ## Best box population
#
# Only `c/B + d B` depends on B, so the optimum is `sqrt(c/d)`.

# %%
b_opt = costmodel.optimal_B(coeffs)
print(f"B_opt = {b_opt:.2f}")

Bs = np.arange(4, 41, 4)
for B in Bs:
    T = costmodel.total_time(1e6, 1e4, B, coeffs)
    print(f"B = {B:2d}  T = {T:14.1f}")

# %% [markdown]
# ## Hiding the bottleneck
#
# The near-field work per process is `d N B / P`. Once that reaches the
# `b log4 P` serial time, every idle slot can be filled with near-field work.

# %%
N, P = 1e6, 1e4
cover = costmodel.min_B_cover(N, P, coeffs)
print(f"N = {N:.0e}, P = {P:.0e}: need B >= {cover:.2f}")

for B in (8, 14, 15, 18):
    rep = costmodel.timeline_simulate(N, int(P), B, 15)
    print(f"B = {B:2d}  covered = {rep.bottleneck_covered!s:5}  "
          f"coarse idle = {rep.idle['coarse_sweep']:.3g}")

# %% [markdown]
# At B = 18 (the rounded optimum) the bottleneck is fully covered, so
# choosing B for speed and choosing it for scalability agree here.
