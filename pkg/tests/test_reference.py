import sys

import numpy as np
import pytest
from scipy.optimize import linprog

from critvis.lp_builder import build_lp
from critvis.quantum import (
    AngleVector,
    ExperimentConfig,
    make_ghz,
    probability_table,
    uniform_table,
)
from critvis.reference import (
    DenseLp,
    OracleError,
    dense_direction_oracle,
    dense_normal_matrix,
    materialize_dense,
    simplex_solve,
)


def highs(lp: DenseLp):
    res = linprog(-lp.c, A_eq=lp.A, b_eq=lp.b, bounds=list(zip(np.zeros_like(lp.u), lp.u)),
                  method="highs")
    return res


def random_box_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    b = A @ rng.uniform(0.1, 0.9, size=n)
    return DenseLp(A, b, rng.normal(size=n), np.ones(n))


@pytest.mark.parametrize("pricing", ["devex", "dantzig"])
def test_simplex_matches_highs_on_random_box_lps(pricing):
    rng = np.random.default_rng(11)
    for _ in range(25):
        m = int(rng.integers(2, 12))
        lp = random_box_lp(rng, m, m + int(rng.integers(1, 15)))
        res = simplex_solve(lp, pricing=pricing)
        ref = highs(lp)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-ref.fun, abs=1e-8)
        assert np.all(res.x >= -1e-9) and np.all(res.x <= lp.u + 1e-9)
        np.testing.assert_allclose(lp.A @ res.x, lp.b, atol=1e-8)


def test_simplex_duals_certify_optimality():
    rng = np.random.default_rng(5)
    lp = random_box_lp(rng, 6, 14)
    res = simplex_solve(lp)
    # reduced costs of variables strictly between bounds vanish
    d = lp.c - lp.A.T @ res.y
    inside = (res.x > 1e-7) & (res.x < 1 - 1e-7)
    np.testing.assert_allclose(d[inside], 0, atol=1e-8)
    # at lower bound d <= 0, at upper bound d >= 0 (maximization)
    assert np.all(d[res.x <= 1e-7] <= 1e-8)
    assert np.all(d[res.x >= 1 - 1e-7] >= -1e-8)


def test_simplex_detects_infeasibility():
    A = np.array([[1.0, 1.0]])
    lp = DenseLp(A, np.array([3.0]), np.array([1.0, 0.0]), np.ones(2))
    assert simplex_solve(lp).status == "infeasible"


def test_simplex_detects_unboundedness():
    A = np.array([[1.0, -1.0]])
    lp = DenseLp(A, np.array([0.0]), np.array([1.0, 1.0]), np.full(2, np.inf))
    assert simplex_solve(lp).status == "unbounded"


def test_simplex_handles_degenerate_cycling_prone_problem():
    # Beale's example, bounded so that it stays finite; degenerate at the start
    A = np.array([[0.25, -60, -0.04, 9, 1, 0, 0],
                  [0.5, -90, -0.02, 3, 0, 1, 0],
                  [0, 0, 1, 0, 0, 0, 1]])
    b = np.array([0.0, 0.0, 1.0])
    c = -np.array([-0.75, 150, -0.02, 6, 0, 0, 0])
    lp = DenseLp(A, b, c, np.full(7, 10.0))
    res = simplex_solve(lp, pricing="dantzig")
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-highs(lp).fun, abs=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_simplex_on_visibility_lps(n):
    cfg = ExperimentConfig.uniform(n)
    rng = np.random.default_rng(n)
    for _ in range(3):
        table = probability_table(make_ghz(n), cfg, AngleVector.random(cfg, rng))
        dense = materialize_dense(build_lp(cfg, table))
        res = simplex_solve(dense)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(-highs(dense).fun, abs=1e-9)


def test_z_measurements_on_ghz_are_classical():
    for n in (2, 3):
        cfg = ExperimentConfig.uniform(n)
        angles = AngleVector.from_flat(cfg, np.zeros(cfg.n_angles))
        dense = materialize_dense(build_lp(cfg, probability_table(make_ghz(n), cfg, angles)))
        assert simplex_solve(dense).objective == pytest.approx(1.0, abs=1e-12)


def test_oracle_caps():
    cfg = ExperimentConfig.uniform(8)
    with pytest.raises(OracleError):
        materialize_dense(build_lp(cfg, uniform_table(cfg)))
    lp = DenseLp(np.zeros((3001, 2)), np.zeros(3001), np.zeros(2), np.ones(2))
    with pytest.raises(OracleError):
        simplex_solve(lp)


def test_dense_direction_oracle_solves_normal_equations():
    cfg = ExperimentConfig.uniform(3)
    lp = build_lp(cfg, probability_table(make_ghz(3), cfg,
                                         AngleVector.random(cfg, np.random.default_rng(0))))
    rng = np.random.default_rng(1)
    theta = rng.uniform(0.1, 2, size=lp.n_cols)
    g = rng.normal(size=lp.n_rows)
    dy = dense_direction_oracle(lp, theta, 1e-3, 1e-3, g)
    G = dense_normal_matrix(materialize_dense(lp).A, theta, 1e-3, 1e-3)
    np.testing.assert_allclose(G @ dy, g, atol=1e-9)


def test_simplex_on_degenerate_six_observer_instance():
    # this instance drove tiny pivots into the basis before the Harris ratio test
    cfg = ExperimentConfig.uniform(6)
    rng = np.random.default_rng(np.random.SeedSequence(0).spawn(4)[2])
    for _ in range(49):
        angles = AngleVector.random(cfg, rng)
    dense = materialize_dense(build_lp(cfg, probability_table(make_ghz(6), cfg, angles)))
    res = simplex_solve(dense)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-highs(dense).fun, abs=1e-8)


def test_simplex_recovers_from_singular_refactorization(monkeypatch):
    import critvis.reference as ref

    real = ref._Basis
    calls = {"n": 0}

    class Flaky(real):
        def __init__(self, B):
            # fail the second periodic refactorization once
            if sys._getframe(1).f_code.co_name == "refactor":
                calls["n"] += 1
                if calls["n"] == 2:
                    raise np.linalg.LinAlgError("singular basis matrix")
            super().__init__(B)

    monkeypatch.setattr(ref, "_Basis", Flaky)
    rng = np.random.default_rng(2)
    lp = random_box_lp(rng, 40, 120)
    res = simplex_solve(lp, refactor_every=10)
    assert calls["n"] > 2
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-highs(lp).fun, abs=1e-8)
