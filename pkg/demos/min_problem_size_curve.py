# %% [markdown]
# # Minimum particles per process
#
# At fixed B, the smallest N/P that still hides the reduction bottleneck
# grows like log4 P. This prints the curve at powers of four and writes
# it as plain rows that any plotting tool can read.

# %%
from pathlib import Path

from fmmoverlap import costmodel, fileio

B, order = 18, 15
ps = costmodel.powers_of_four(4, 4**10)
curve = costmodel.sweep_min_size(ps, B, order)

for P, m in curve:
    print(f"P = {P:8d}  min N/P = {m:7.2f}")

# %%
coeffs = costmodel.coefficients(order)
print(f"slope per factor of 4 in P: {coeffs.b / coeffs.d / B:.2f}")

# %%
out = Path("min_problem_size.csv")
fileio.write_curve(out, curve)
print(f"wrote {out}")
