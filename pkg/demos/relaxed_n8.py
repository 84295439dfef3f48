"""Eight-observer minimization in the relaxed regime.

Runs the downhill simplex search with ftol 0.04, preconditioner rank 150 and
objective scaling 8.  The minimum should land in [0.081, 0.10]; the closed
form is 2**-3.5 = 0.0884.  Each LP has 6561 rows and 65537 columns, so the
run takes many hours on one core.  Progress goes to ``relaxed_n8_trace.csv``.

Equivalent command line::

    critvis minimize -n 8 --solver ipm --ftol 0.04 --rank 150 --obj-scale 8 \\
        --trace relaxed_n8_trace.csv --out relaxed_n8.json
"""
import sys

from critvis.cli import main

if __name__ == "__main__":
    sys.exit(main(["minimize", "-n", "8", "--solver", "ipm", "--ftol", "0.04",
                   "--rank", "150", "--obj-scale", "8",
                   "--trace", "relaxed_n8_trace.csv", "--out", "relaxed_n8.json"]))
