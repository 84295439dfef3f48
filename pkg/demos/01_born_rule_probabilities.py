# %% [markdown]
# # Outcome probabilities for local spin measurements
#
# Each observer measures one qubit of a shared pure state along a direction
# given by two angles, theta (polar) and phi (azimuth).  Outcome 0 is the
# +1 eigenvector of the Pauli operator along that direction.  The LP layer
# only needs the resulting table of joint outcome probabilities.

# %%
import numpy as np

from critvis.quantum import (
    AngleVector,
    ExperimentConfig,
    ObservableSetting,
    make_ghz,
    outcome_distribution,
    probability_table,
)

ghz = make_ghz(3)
print("GHZ amplitudes:", np.round(ghz.amplitudes.real, 4))

# %% [markdown]
# Measuring every qubit along z only ever gives all-equal outcomes.

# %%
z = ObservableSetting(0.0, 0.0)
print(np.round(outcome_distribution(ghz, [z, z, z]), 4))

# %% [markdown]
# Along x the three outcomes are perfectly correlated in parity: only the
# even-parity strings appear, each with probability 1/4.

# %%
x = ObservableSetting(np.pi / 2, 0.0)
dist = outcome_distribution(ghz, [x, x, x])
for idx, p in enumerate(dist):
    print(f"{idx:03b}  {p:.4f}")

# %% [markdown]
# With two observables per observer there are 2**3 settings choices.  The
# table keeps, for every choice, the full outcome distribution; each one
# sums to one.

# %%
cfg = ExperimentConfig.uniform(3)
angles = AngleVector.random(cfg, np.random.default_rng(0))
table = probability_table(ghz, cfg, angles, full=True)
print("table shape (choices, outcomes):", table.probs.shape)
print("row sums:", np.round(table.probs.sum(axis=1), 12))
