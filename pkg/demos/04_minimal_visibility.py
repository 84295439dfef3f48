# %% [markdown]
# # Searching for the most noise-robust measurements
#
# The critical visibility depends on the measurement angles.  A downhill
# simplex search over all angles finds its minimum.  For the GHZ state the
# minimum is known in closed form, 2**((1 - n) / 2).

# %%
import time

from critvis.dsm import DsmSettings, critical_visibility_objective, minimize
from critvis.mf_ipm import IpmSettings
from critvis.quantum import ExperimentConfig, make_ghz

for n in (2, 3, 4):
    cfg = ExperimentConfig.uniform(n)
    obj = critical_visibility_objective(make_ghz(n), cfg, "ipm",
                                        IpmSettings(chol_rank=cfg.n_rows_reduced))
    t0 = time.perf_counter()
    res = minimize(obj, cfg, DsmSettings(ftol=0.01, restarts=3))
    print(f"n={n}: min v_c {res.best_value:.4f} (closed form {2 ** ((1 - n) / 2):.4f})  "
          f"{res.evaluations} LPs, {time.perf_counter() - t0:.1f}s")
    print("   per restart:", [round(v, 4) for v in res.per_restart_values])

# %% [markdown]
# Individual restarts can stop in local minima (0.67 and 0.71 are common
# for three observers), which is why several random starts are used.
