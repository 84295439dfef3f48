"""Dense oracles: explicit LP construction and a bounded-variable revised simplex.

Everything here is deliberately direct and small-scale; it exists to check
the implicit operators and the interior point solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .lp_builder import ImplicitLp
from .quantum import ExperimentConfig, ProbabilityTable

DENSE_CAP = 10**7
_dger = sla.get_blas_funcs("ger", dtype=np.float64)
_getrf, _getri = sla.get_lapack_funcs(("getrf", "getri"), dtype=np.float64)


class OracleError(RuntimeError):
    pass


@dataclass
class DenseLp:
    """``max c^T x  s.t.  A x = b,  0 <= x <= u`` held as dense arrays."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    row_names: list[str] | None = None
    col_names: list[str] | None = None

    @property
    def shape(self):
        return self.A.shape


def materialize_dense(lp: ImplicitLp) -> DenseLp:
    """Dense copy of an implicit LP with identical row and column order."""
    if lp.n_rows * lp.n_cols > DENSE_CAP:
        raise OracleError(
            f"{lp.n_rows} x {lp.n_cols} exceeds the dense cap of {DENSE_CAP} entries"
        )
    A = np.zeros((lp.n_rows, lp.n_cols))
    A[np.arange(lp.n_rows)[:, None], lp.rows_by_index] = 1.0
    A[:, -1] = lp.last_column
    return DenseLp(A, lp.b, lp.c, lp.u)


def brute_force_dense(
    config: ExperimentConfig, table: ProbabilityTable, rows: str = "reduced"
) -> DenseLp:
    """Build the LP straight from the marginal equations by enumeration.

    ``rows`` selects ``"full"`` (every (o, r) pair plus the normalization
    row) or ``"reduced"`` (pairs where no observer sees outcome 1 on a
    non-first observable).  Independent of :mod:`critvis.lp_builder`.
    """
    d, n = config.outcomes, config.n_observers
    # assignments enumerated with observer 0 / observable 0 as leading digit
    assignments = list(itertools.product(range(d), repeat=sum(config.observables)))
    starts = np.cumsum((0,) + config.observables[:-1])
    noise = d**-n
    A_rows, b = [], []
    for o in itertools.product(*(range(m) for m in config.observables)):
        for r in itertools.product(range(d), repeat=n):
            if rows == "reduced" and any(oj > 0 and rj == d - 1 for oj, rj in zip(o, r)):
                continue
            line = [
                1.0 if all(a[starts[j] + o[j]] == r[j] for j in range(n)) else 0.0
                for a in assignments
            ]
            line.append(noise - table.get(o, r))
            A_rows.append(line)
            b.append(noise)
    if rows == "full":
        A_rows.append([1.0] * len(assignments) + [0.0])
        b.append(1.0)
    A = np.array(A_rows)
    c = np.zeros(A.shape[1])
    c[-1] = 1.0
    return DenseLp(A, np.array(b), c, np.ones(A.shape[1]))


def dense_normal_matrix(A: np.ndarray, theta, reg_primal, reg_dual) -> np.ndarray:
    """``A (theta^-1 + R_p)^-1 A^T + R_d`` formed explicitly."""
    D = 1.0 / (1.0 / np.asarray(theta, dtype=float) + reg_primal)
    G = (A * D) @ A.T
    G[np.diag_indices_from(G)] += reg_dual
    return G


def dense_direction_oracle(lp, theta, reg_primal, reg_dual, g) -> np.ndarray:
    """Solve the regularized normal equations by dense Cholesky."""
    A = lp.A if isinstance(lp, DenseLp) else materialize_dense(lp).A
    if A.shape[0] > 3000:
        raise OracleError("dense direction oracle limited to 3000 rows")
    G = dense_normal_matrix(A, theta, reg_primal, reg_dual)
    try:
        factor = sla.cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"normal matrix not positive definite: {exc}") from None
    return sla.cho_solve(factor, np.asarray(g, dtype=float))


HARRIS_TOL = 1e-7


@dataclass
class SimplexResult:
    status: str
    objective: float
    x: np.ndarray
    y: np.ndarray | None = None
    basis: np.ndarray | None = None
    iterations: int = 0
    phase1_iterations: int = 0
    used_bland: bool = False
    info: dict = field(default_factory=dict)


class _Basis:
    """Basis inverse from a partially pivoted LU, then product-form rank-1 updates."""

    def __init__(self, B: np.ndarray):
        lu, piv, info = _getrf(B)
        if info > 0:
            raise np.linalg.LinAlgError("singular basis matrix")
        inv, info = _getri(lu, piv, overwrite_lu=True)
        self.inv = np.asfortranarray(inv)
        self.updates = 0

    def ftran(self, a):
        return self.inv @ a

    def ftran_sparse(self, idx, vals):
        return self.inv[:, idx] @ vals

    def btran(self, z):
        return z @ self.inv

    def update(self, p, alpha):
        row = self.inv[p] / alpha[p]
        self.inv = _dger(-1.0, alpha, row, a=self.inv, overwrite_a=True)
        self.inv[p] = row
        self.updates += 1


def simplex_solve(
    lp: DenseLp,
    tol: float = 1e-9,
    refactor_every: int = 100,
    max_iters: int | None = None,
    pricing: str = "devex",
) -> SimplexResult:
    """Two-phase bounded-variable revised simplex for ``max c^T x, Ax=b, 0<=x<=u``.

    ``pricing`` is ``"devex"`` (approximate steepest edge) or ``"dantzig"``
    (largest reduced cost).  Either switches permanently to Bland's rule
    after ``10 (m + n)`` degenerate pivots.
    """
    if pricing not in ("devex", "dantzig"):
        raise ValueError(f"unknown pricing rule {pricing!r}")
    A0 = np.asarray(lp.A, dtype=float)
    m, n = A0.shape
    if m > 3000 or n > 70000:
        raise OracleError(f"problem {m} x {n} is beyond the simplex oracle's caps")
    sign = np.where(lp.b < 0, -1.0, 1.0)
    A = np.hstack([A0 * sign[:, None], np.eye(m)])
    AT = sp.csr_matrix(A.T)
    AT.sort_indices()
    b = lp.b * sign
    upper = np.concatenate([np.asarray(lp.u, dtype=float), np.full(m, np.inf)])
    N = n + m
    max_iters = max_iters or 50 * (m + n) + 1000

    basis = np.arange(n, N)
    at_upper = np.zeros(N, dtype=bool)
    state = dict(iters=0, degenerate=0, bland=False)

    def solve_phase(cost):
        fac = _Basis(A[:, basis])
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basis] = True
        weights = np.ones(N)
        interval = refactor_every
        checkpoint = (basis.copy(), at_upper.copy())

        def refactor():
            # a singular refactorization means the updated inverse drifted;
            # go back to the last clean basis and refactor more often
            nonlocal interval, checkpoint
            try:
                fresh = _Basis(A[:, basis])
            except np.linalg.LinAlgError:
                if interval <= 5:
                    raise
                interval = max(5, interval // 5)
                basis[:], at_upper[:] = checkpoint
                is_basic[:] = False
                is_basic[basis] = True
                weights[:] = 1.0
                fresh = _Basis(A[:, basis])
            checkpoint = (basis.copy(), at_upper.copy())
            return fresh

        def nonbasic_x():
            xn = np.where(at_upper, upper, 0.0)
            xn[is_basic] = 0.0
            return xn

        def reduced_costs():
            d = cost - AT @ fac.btran(cost[basis])
            d[is_basic] = 0.0
            return d

        xB = fac.ftran(b - A @ nonbasic_x())
        d = reduced_costs()
        fixed = upper == 0.0
        while True:
            if state["iters"] >= max_iters:
                return "cycling-abort"
            if fac.updates >= interval:
                fac = refactor()
                xB = fac.ftran(b - A @ nonbasic_x())
                d = reduced_costs()
            eligible = ((~at_upper) & (d < -tol) & ~fixed) | (at_upper & (d > tol))
            eligible &= ~is_basic
            if not eligible.any():
                # confirm with freshly computed prices before stopping
                fac = refactor()
                d = reduced_costs()
                eligible = ((~at_upper) & (d < -tol) & ~fixed) | (at_upper & (d > tol))
                eligible &= ~is_basic
                if not eligible.any():
                    return "optimal"
                xB = fac.ftran(b - A @ nonbasic_x())
            if state["bland"]:
                q = int(np.flatnonzero(eligible)[0])
            elif pricing == "devex":
                q = int(np.argmax(np.where(eligible, d * d / weights, -1.0)))
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = -1.0 if at_upper[q] else 1.0
            col = slice(AT.indptr[q], AT.indptr[q + 1])
            alpha = fac.ftran_sparse(AT.indices[col], AT.data[col])
            delta = -direction * alpha
            ub = upper[basis]
            t_max, leave, leave_to_upper = upper[q], -1, False
            dec = delta < -tol
            inc = (delta > tol) & np.isfinite(ub)
            ratios = np.full(m, np.inf)
            ratios[dec] = np.maximum(xB[dec], 0.0) / -delta[dec]
            ratios[inc] = np.maximum(ub[inc] - xB[inc], 0.0) / delta[inc]
            if np.isfinite(ratios).any():
                if state["bland"]:
                    r_min = ratios.min()
                    ties = np.flatnonzero(ratios <= r_min + tol)
                    p = int(ties[np.argmin(basis[ties])])
                else:
                    # Harris: bounds may be overshot by HARRIS_TOL, which lets
                    # a large pivot win over a tiny one with a smaller ratio
                    relaxed = np.full(m, np.inf)
                    relaxed[dec] = (np.maximum(xB[dec], 0.0) + HARRIS_TOL) / -delta[dec]
                    relaxed[inc] = (np.maximum(ub[inc] - xB[inc], 0.0) + HARRIS_TOL) / delta[inc]
                    ties = np.flatnonzero(ratios <= relaxed.min())
                    p = int(ties[np.argmax(np.abs(alpha[ties]))])
                if ratios[p] < t_max:
                    t_max, leave, leave_to_upper = ratios[p], p, bool(inc[p])
            if not np.isfinite(t_max):
                return "unbounded"
            state["iters"] += 1
            if t_max <= tol:
                state["degenerate"] += 1
                if state["degenerate"] > 10 * (m + n):
                    state["bland"] = True
            xB = xB + t_max * delta
            if leave < 0:
                at_upper[q] = not at_upper[q]
                continue
            # pivot row of B^-1 A drives both the price and the weight updates
            ratio = (AT @ fac.inv[leave]) / alpha[leave]
            out = basis[leave]
            d_q = d[q]
            d -= d_q * ratio
            d[q] = 0.0
            d[out] = -d_q / alpha[leave]
            if pricing == "devex":
                w_q = weights[q]
                np.maximum(weights, ratio * ratio * w_q, out=weights)
                weights[out] = max(w_q / alpha[leave] ** 2, 1.0)
                if weights.max() > 1e6:
                    weights[:] = 1.0
            at_upper[out] = leave_to_upper
            is_basic[out] = False
            is_basic[q] = True
            at_upper[q] = False
            xB[leave] = (upper[q] if direction < 0 else 0.0) + direction * t_max
            basis[leave] = q
            fac.update(leave, alpha)

    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = solve_phase(cost1)
    phase1 = state["iters"]
    x = _primal(A, b, basis, at_upper, upper)
    if status != "optimal":
        return SimplexResult(status, math.nan, x[:n], iterations=state["iters"])
    if x[n:].sum() > 1e-7 * max(1.0, np.abs(b).max()):
        return SimplexResult("infeasible", math.nan, x[:n], iterations=state["iters"],
                             phase1_iterations=phase1)
    upper[n:] = 0.0
    cost2 = np.concatenate([-np.asarray(lp.c, dtype=float), np.zeros(m)])
    status = solve_phase(cost2)
    x = _primal(A, b, basis, at_upper, upper)
    fac = _Basis(A[:, basis])
    y = fac.btran(cost2[basis]) * -sign
    obj = float(lp.c @ x[:n]) if status == "optimal" else math.nan
    return SimplexResult(status, obj, x[:n], y, basis.copy(), state["iters"], phase1,
                         state["bland"])


def _primal(A, b, basis, at_upper, upper):
    N = A.shape[1]
    x = np.where(at_upper, upper, 0.0)
    x[basis] = 0.0
    x[basis] = np.linalg.solve(A[:, basis], b - A @ x)
    return x
