# %% [markdown]
# # Interior point solve with a partial Cholesky preconditioner
#
# Each Newton step solves the normal equations (A Theta A^T + reg) dy = g
# by conjugate gradients.  The preconditioner factors the k rows with the
# largest diagonal and keeps only the diagonal of the rest.  When the
# problem has no more than k rows the factor is complete and CG needs a
# single iteration.

# %%
import io
import time

import numpy as np

from critvis.dsm import ghz_reference_angles
from critvis.lp_builder import build_lp
from critvis.mf_ipm import IpmSettings, solve
from critvis.quantum import AngleVector, ExperimentConfig, make_ghz, probability_table
from critvis.reference import materialize_dense, simplex_solve


def ghz_lp(n, angles):
    cfg = ExperimentConfig.uniform(n)
    return build_lp(cfg, probability_table(make_ghz(n), cfg, angles))


lp = ghz_lp(4, ghz_reference_angles(4))
trace = io.StringIO()
res = solve(lp, trace_stream=trace)
print(trace.getvalue())
print(f"v_c = {res.objective:.6f}  status {res.status}  CG per step {res.cg_iterations}")

# %% [markdown]
# Above 100 rows the preconditioner is only partial and CG takes more
# steps.  The answer still matches the dense simplex method closely.

# %%
cfg = ExperimentConfig.uniform(5)
rng = np.random.default_rng(0)
for _ in range(3):
    lp = ghz_lp(5, AngleVector.random(cfg, rng))
    t0 = time.perf_counter()
    ipm = solve(lp)
    t1 = time.perf_counter()
    ref = simplex_solve(materialize_dense(lp))
    t2 = time.perf_counter()
    print(f"ipm {ipm.objective:.6f} ({t1 - t0:.2f}s, {ipm.total_cg_iterations} CG)   "
          f"simplex {ref.objective:.6f} ({t2 - t1:.2f}s)")

# %% [markdown]
# A larger rank k trades factorization work for fewer CG iterations.

# %%
for k in (25, 100, 243):
    t0 = time.perf_counter()
    r = solve(lp, IpmSettings(chol_rank=k))
    print(f"k={k:3d}  {time.perf_counter() - t0:.2f}s  CG {r.total_cg_iterations:4d}  "
          f"v_c {r.objective:.6f}")
