# %% [markdown]
# # Driving everything from the command line
#
# The `critvis` console script wraps the same pipeline.  Here it is called
# in-process; each call is equivalent to the shell command in the comment.

# %%
import json
import tempfile
from pathlib import Path

from critvis.cli import main

work = Path(tempfile.mkdtemp())

# critvis minimize -n 3 --solver ipm --out minimize.json
main(["minimize", "-n", "3", "--solver", "ipm", "--out", str(work / "minimize.json")])

# %% [markdown]
# The JSON report carries the best angles and the resolved settings, so the
# optimum can be re-evaluated or exported later.

# %%
report = json.loads((work / "minimize.json").read_text())
print(sorted(report))
# critvis solve-lp -n 3 --solver simplex --angles minimize.json
main(["solve-lp", "-n", "3", "--solver", "simplex", "--angles", str(work / "minimize.json")])
# critvis export-mps -n 3 --angles minimize.json --out n3.mps
main(["export-mps", "-n", "3", "--angles", str(work / "minimize.json"),
      "--out", str(work / "n3.mps")])

# %% [markdown]
# Cross-checking the two solvers on random angles, then a small timing
# ladder written as CSV.

# %%
# critvis verify -n 4 --samples 20
main(["verify", "-n", "4", "--samples", "20"])
# critvis bench --ladder 3 4 5 --out bench.csv
main(["bench", "--ladder", "3", "4", "5", "--out", str(work / "bench.csv")])
print((work / "bench.csv").read_text())
