# %% [markdown]
# # The critical visibility LP, stored implicitly
#
# Mixing the quantum table P with white noise gives
# v * P + (1 - v) * uniform.  The critical visibility is the largest v for
# which this mixture is still the marginal of some joint distribution over
# all observables.  Unknowns are that joint distribution (one column per
# assignment of outcomes to every observable) plus v itself.
#
# Many marginal equations are implied by the others.  A row is dropped
# when some observer reports outcome 1 on an observable other than its
# first; what remains has 3**n rows for two observables per observer.

# %%
import numpy as np

from critvis import lp_builder as K
from critvis.lp_builder import build_lp, full_row_index, reduced_row_set
from critvis.quantum import (
    AngleVector,
    ExperimentConfig,
    make_ghz,
    probability_table,
    uniform_table,
)
from critvis.reference import brute_force_dense, materialize_dense

cfg = ExperimentConfig.uniform(2)
kept = [full_row_index(cfg, o, r) + 1 for o, r in reduced_row_set(cfg)]
print("kept rows (1-based):", kept)
print("dropped:", sorted(set(range(1, 18)) - set(kept)))

# %% [markdown]
# The dropped rows really are redundant: the full 17-row system and the
# 9 kept rows have the same rank.

# %%
table = probability_table(make_ghz(2), cfg, AngleVector.random(cfg, np.random.default_rng(1)),
                          full=True)
full = brute_force_dense(cfg, table, rows="full").A
reduced = materialize_dense(build_lp(cfg, table)).A
print("full system", full.shape, "rank", np.linalg.matrix_rank(full))
print("kept system", reduced.shape, "rank", np.linalg.matrix_rank(reduced))

# %% [markdown]
# ## Matrix-free products
#
# The LP never forms A.  Rows are stored as lists of column indices (all
# structural entries are 1) plus one dense column for v.  Products with A,
# with its transpose and with A Theta A^T are computed from those lists.

# %%
cfg = ExperimentConfig.uniform(5)
lp = build_lp(cfg, probability_table(make_ghz(5), cfg,
                                     AngleVector.random(cfg, np.random.default_rng(2))))
rng = np.random.default_rng(3)
x, y = rng.normal(size=lp.n_cols), rng.normal(size=lp.n_rows)
print("<Ax, y> =", K.a_times_x(lp, x) @ y)
print("<x, A^T y> =", x @ K.at_times_y(lp, y))

theta = rng.uniform(0.1, 2, size=lp.n_cols)
col = K.col_aat(lp, theta, 0)
print("diagonal of A Theta A^T agrees with column 0:", col[0] == K.diag_aat(lp, theta)[0])

# %% [markdown]
# ## Storage
#
# Index arrays dominate.  The eight-observer problem has 65537 columns.

# %%
for n in range(4, 9):
    cfg = ExperimentConfig.uniform(n)
    lp = build_lp(cfg, uniform_table(cfg))
    print(f"n={n}  rows={lp.n_rows:5d}  cols={lp.n_cols:6d}  {lp.nbytes / 2**20:7.2f} MiB")
