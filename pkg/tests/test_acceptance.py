"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Criteria 1 and 3 take the better part of an hour on one core.  Criterion 8
needs many hours and runs only when ``CRITVIS_RUN_N8=1`` is set; the same
run is scripted in ``demos/relaxed_n8.py``.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from critvis import cli
from critvis import lp_builder as K
from critvis import mf_ipm
from critvis.dsm import (
    DsmSettings,
    critical_visibility_objective,
    ghz_reference_angles,
    minimize,
)
from critvis.lp_builder import build_lp, full_row_index, reduced_row_set
from critvis.mf_ipm import IpmSettings, solve
from critvis.quantum import (
    AngleVector,
    ExperimentConfig,
    make_ghz,
    probability_table,
    uniform_table,
)
from critvis.reference import brute_force_dense, materialize_dense

TABLE3 = {2: 0.71, 3: 0.50, 4: 0.35, 5: 0.25}
TABLE2 = {4: 0.354, 5: 0.250, 6: 0.177, 7: 0.125}
TEN_MINUTES = 600.0


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def ghz_lp(n, angles):
    cfg = ExperimentConfig.uniform(n)
    return build_lp(cfg, probability_table(make_ghz(n), cfg, angles))


@pytest.fixture(scope="module")
def ipm_minima():
    """IPM-driven minimization for n = 2..5, timed as one run."""
    out = {}
    t0 = time.perf_counter()
    for n in TABLE3:
        cfg = ExperimentConfig.uniform(n)
        # a complete factorization is cheapest while m <= 243
        obj = critical_visibility_objective(make_ghz(n), cfg, "ipm",
                                            IpmSettings(chol_rank=cfg.n_rows_reduced))
        out[n] = minimize(obj, cfg, DsmSettings(ftol=0.01))
    return out, time.perf_counter() - t0


def test_criterion_1_analytic_minimum(ipm_minima):
    results, seconds = ipm_minima
    ipm_ok = all(abs(results[n].best_value - v) <= 0.01 for n, v in TABLE3.items())
    simplex = {}
    for n in (2, 3, 4):
        cfg = ExperimentConfig.uniform(n)
        obj = critical_visibility_objective(make_ghz(n), cfg, "simplex")
        simplex[n] = minimize(obj, cfg, DsmSettings(ftol=1e-4)).best_value
    simplex_ok = all(round(v, 3) == round(2 ** ((1 - n) / 2), 3) for n, v in simplex.items())
    detail = ("ipm " + " ".join(f"n={n}:{r.best_value:.4f}" for n, r in results.items())
              + f" in {seconds:.0f}s; simplex "
              + " ".join(f"n={n}:{v:.4f}" for n, v in simplex.items()))
    report(1, ipm_ok and simplex_ok and seconds <= TEN_MINUTES, detail)


def test_criterion_2_single_lp_values(ipm_minima):
    results, _ = ipm_minima
    values, seconds = {}, {}
    for n in TABLE2:
        # minimizer angles where the search ran, closed-form minimizers beyond
        angles = results[n].best_angles if n in results else ghz_reference_angles(n)
        t0 = time.perf_counter()
        res = solve(ghz_lp(n, angles))
        seconds[n] = time.perf_counter() - t0
        values[n] = res.objective
    ok = all(abs(values[n] - v) <= 0.007 for n, v in TABLE2.items())
    detail = " ".join(f"n={n}:{values[n]:.4f}" for n in TABLE2) + f" (n=7 {seconds[7]:.0f}s)"
    report(2, ok and seconds[7] <= TEN_MINUTES, detail)


def test_criterion_3_oracle_agreement(tmp_path):
    worst = {}
    for n in (5, 6):
        out = tmp_path / f"verify{n}.json"
        assert cli.main(["verify", "-n", str(n), "--samples", "100", "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["samples"] == 100
        worst[n] = data["max_difference"]
    report(3, all(v <= 0.01 for v in worst.values()),
           " ".join(f"n={n}: max|ipm-simplex|={v:.2e}" for n, v in worst.items()))


def test_criterion_4_redundancy_lemma():
    counts = {n: ExperimentConfig.uniform(n).n_rows_reduced for n in range(2, 9)}
    built = {n: len(reduced_row_set(ExperimentConfig.uniform(n))) for n in range(2, 7)}
    for n in (7, 8):
        cfg = ExperimentConfig.uniform(n)
        built[n] = build_lp(cfg, uniform_table(cfg)).n_rows
    cfg = ExperimentConfig.uniform(2)
    kept = {full_row_index(cfg, o, r) + 1 for o, r in reduced_row_set(cfg)}
    skipped = set(range(1, 18)) - kept
    table = probability_table(make_ghz(2), cfg,
                              AngleVector.random(cfg, np.random.default_rng(0)), full=True)
    rank = np.linalg.matrix_rank(materialize_dense(build_lp(cfg, table)).A)
    full_rank = np.linalg.matrix_rank(brute_force_dense(cfg, table, rows="full").A)
    ok = (all(counts[n] == built[n] == 3**n for n in counts)
          and skipped == {6, 8, 11, 12, 14, 15, 16, 17} and rank == full_rank == 9)
    report(4, ok, f"rows {[built[n] for n in sorted(built)]}, skipped {sorted(skipped)}, "
                  f"rank {rank}")


def test_criterion_5_kernels():
    worst_adjoint = 0.0
    for n in range(2, 7):
        cfg = ExperimentConfig.uniform(n)
        lp = build_lp(cfg, probability_table(make_ghz(n), cfg,
                                             AngleVector.random(cfg, np.random.default_rng(n))))
        rng = np.random.default_rng(100 + n)
        for _ in range(1000):
            x, y = rng.normal(size=lp.n_cols), rng.normal(size=lp.n_rows)
            scale = np.abs(K.a_times_x(lp, np.abs(x))) @ np.abs(y)
            worst_adjoint = max(worst_adjoint,
                                abs(K.a_times_x(lp, x) @ y - x @ K.at_times_y(lp, y)) / scale)
    worst_dense = 0.0
    for n in (2, 3):
        cfg = ExperimentConfig.uniform(n)
        lp = build_lp(cfg, probability_table(make_ghz(n), cfg,
                                             AngleVector.random(cfg, np.random.default_rng(n))))
        A = materialize_dense(lp).A
        theta = np.random.default_rng(n).uniform(0.01, 10, size=lp.n_cols)
        G = (A * theta) @ A.T
        scale = np.abs(G).max()
        worst_dense = max(worst_dense, np.abs(K.diag_aat(lp, theta) - np.diag(G)).max() / scale)
        for i in range(lp.n_rows):
            worst_dense = max(worst_dense,
                              np.abs(K.col_aat(lp, theta, i) - G[:, i]).max() / scale)
    report(5, worst_adjoint <= 1e-10 and worst_dense <= 1e-12,
           f"adjoint {worst_adjoint:.1e}, normal-matrix kernels {worst_dense:.1e}")


def test_criterion_6_exact_preconditioner(monkeypatch):
    calls = []
    original = mf_ipm.pcg_solve

    def spy(*args, **kwargs):
        dy, info = original(*args, **kwargs)
        calls.append((len(args) > 7 and args[7] is not None, info))
        return dy, info

    monkeypatch.setattr(mf_ipm, "pcg_solve", spy)
    statuses = []
    for n in (2, 3, 4):
        rng = np.random.default_rng(n)
        cfg = ExperimentConfig.uniform(n)
        assert cfg.n_rows_reduced <= IpmSettings().chol_rank
        for _ in range(3):
            statuses.append(solve(ghz_lp(n, AngleVector.random(cfg, rng))).status)
    cold_ok = all(info.converged and info.iterations == 1 for warm, info in calls if not warm)
    # a warm start may already meet the tolerance
    warm_ok = all(info.converged and info.iterations <= 1 for warm, info in calls if warm)
    cold = sum(1 for warm, _ in calls if not warm)
    report(6, cold_ok and warm_ok and set(statuses) == {"optimal"},
           f"{len(calls)} Newton systems ({cold} cold), max CG iterations "
           f"{max(info.iterations for _, info in calls)}")


def test_criterion_7_memory():
    sizes = {}
    for n in range(5, 9):
        cfg = ExperimentConfig.uniform(n)
        lp = build_lp(cfg, uniform_table(cfg))
        sizes[n] = (lp.nbytes, lp.n_cols)
    (b5, c5), (b8, c8) = sizes[5], sizes[8]
    # total bytes ~ columns**exponent; sub-linear means exponent < 1
    exponent = math.log(b8 / b5) / math.log(c8 / c5)
    steps = [math.log(sizes[n + 1][0] / sizes[n][0]) / math.log(sizes[n + 1][1] / sizes[n][1])
             for n in range(5, 8)]
    ok = c8 == 65537 and b8 <= 32 * 2**20 and all(e < 1 for e in steps + [exponent])
    report(7, ok, f"n=8 storage {b8 / 2**20:.1f} MiB (cap 32); bytes ~ columns^{exponent:.2f} "
                  f"over n=5..8, per step {[round(e, 2) for e in steps]}")


def test_criterion_8_relaxed_n8():
    if os.environ.get("CRITVIS_RUN_N8") != "1":
        ACCEPTANCE_LINES.append("criterion 8: NOT RUN  many hours on one core; "
                                "set CRITVIS_RUN_N8=1 or run demos/relaxed_n8.py")
        pytest.skip("set CRITVIS_RUN_N8=1 to run the n=8 minimization")
    cfg = ExperimentConfig.uniform(8)
    obj = critical_visibility_objective(make_ghz(8), cfg, "ipm",
                                        IpmSettings(chol_rank=150, objective_scale=8))
    res = minimize(obj, cfg, DsmSettings(ftol=0.04))
    report(8, 0.081 <= res.best_value <= 0.10,
           f"n=8 min v_c {res.best_value:.4f} after {res.evaluations} LPs")
