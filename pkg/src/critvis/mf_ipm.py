"""Matrix-free primal-dual interior point method for box-bounded LPs.

Solves ``max c^T x  s.t.  A x = b,  0 <= x <= u`` touching ``A`` only through
the four kernels of :mod:`critvis.lp_builder`.  Newton directions come from
the regularized normal equations

    (A (Theta^-1 + R_p)^-1 A^T + R_d) dy = g

solved inexactly by conjugate gradients preconditioned with a rank-k
partial Cholesky factor whose Schur complement is replaced by its diagonal.

Internally the problem is handled in minimization form with cost
``q = -scale * c``; dual variables ``s`` and ``w`` price the lower and upper
bounds so that ``A^T y + s - w = q``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import get_blas_funcs

from . import lp_builder as K


class NumericalFailure(RuntimeError):
    """Breakdown that regularization could not cure."""


@dataclass(frozen=True)
class IpmSettings:
    epsilon: float = 1e-5
    eps_cg: float = 1e-6
    chol_rank: int = 100
    cg_initial_limit: int = 100
    cg_growth: float = 2.0
    cg_cap: int = 1000
    sigma_min: float = 0.01
    sigma_max: float = 0.8
    reg_scale: float = 1e-4
    reg_floor: float = 1e-10
    feas_tol: float = 1e-4
    max_ipm_iters: int = 200
    objective_scale: float = 1.0
    step_fraction: float = 0.995
    max_reg_escalations: int = 6
    stall_iters: int = 5
    equal_steps: bool = False

    def __post_init__(self):
        for name in ("epsilon", "eps_cg", "reg_scale", "reg_floor", "feas_tol", "objective_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.stall_iters < 1:
            raise ValueError("stall_iters must be at least 1")
        if self.chol_rank < 1:
            raise ValueError("chol_rank must be at least 1")
        if self.cg_cap < self.cg_initial_limit:
            raise ValueError("cg_cap must be at least the initial CG limit")
        if not 0 < self.sigma_min <= self.sigma_max < 1:
            raise ValueError("need 0 < sigma_min <= sigma_max < 1")

    def cg_limit(self, mu: float, m: int) -> int:
        """CG iteration limit for barrier parameter ``mu``: doubles per decade below 1e-2."""
        base = min(m, self.cg_initial_limit)
        if mu >= 1e-2:
            return base
        decades = math.floor(math.log10(1e-2 / mu))
        return int(min(self.cg_cap, base * self.cg_growth**decades))


@dataclass
class IpmState:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    w: np.ndarray
    u: np.ndarray
    reg_primal: float = 0.0
    reg_dual: float = 0.0

    @property
    def mu(self) -> float:
        n = self.x.size
        return float(self.x @ self.s + (self.u - self.x) @ self.w) / (2 * n)

    @property
    def theta(self) -> np.ndarray:
        return 1.0 / (self.s / self.x + self.w / (self.u - self.x))

    def check_interior(self) -> None:
        if not (np.all(self.x > 0) and np.all(self.x < self.u)
                and np.all(self.s > 0) and np.all(self.w > 0)):
            raise NumericalFailure("iterate left the interior")


@dataclass
class PartialCholesky:
    """Rank-k pivoted Cholesky of the normal matrix, Schur complement kept as a diagonal.

    ``L11`` is the unit lower triangle on the pivot rows, ``L21`` the
    remaining rows; ``rest`` lists the non-pivot rows in index order.
    """

    pivots: np.ndarray
    rest: np.ndarray
    L11: np.ndarray
    L21: np.ndarray
    d_l: np.ndarray
    d_s: np.ndarray

    @property
    def rank(self) -> int:
        return self.pivots.size

    @property
    def size(self) -> int:
        return self.pivots.size + self.rest.size

    def lower(self) -> np.ndarray:
        """Full ``m x k`` factor in original row order."""
        L = np.zeros((self.size, self.rank))
        L[self.pivots] = self.L11
        L[self.rest] = self.L21
        return L


@dataclass
class IpmResult:
    objective: float
    status: str
    ipm_iterations: int
    total_cg_iterations: int
    final_gap: float
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    primal_infeasibility: float = math.nan
    dual_infeasibility: float = math.nan
    cg_iterations: list[int] = field(default_factory=list)
    mu_history: list[float] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


def regularized_theta(theta, reg_primal) -> np.ndarray:
    """``(Theta^-1 + R_p)^-1`` elementwise."""
    return 1.0 / (1.0 / np.asarray(theta, dtype=float) + reg_primal)


def normal_matvec(lp, theta_reg, reg_dual, v) -> np.ndarray:
    return K.a_times_x(lp, theta_reg * K.at_times_y(lp, v)) + reg_dual * v


def partial_cholesky(lp, theta, reg_primal, reg_dual, k: int) -> PartialCholesky:
    """Greedy largest-pivot partial Cholesky of ``A (Theta^-1+R_p)^-1 A^T + R_d``."""
    m = lp.n_rows
    k = min(k, m)
    if k < 1:
        raise ValueError("rank must be at least 1")
    theta_reg = regularized_theta(theta, reg_primal)
    reg_dual = np.broadcast_to(np.asarray(reg_dual, dtype=float), (m,))
    diag = K.diag_aat(lp, theta_reg) + reg_dual
    L = np.zeros((m, k))
    d_l = np.empty(k)
    pivots = np.empty(k, dtype=np.int64)
    free = np.ones(m, dtype=bool)
    for j in range(k):
        p = int(np.argmax(np.where(free, diag, -np.inf)))
        pivot = diag[p]
        if not pivot > 0 or not math.isfinite(pivot):
            raise NumericalFailure(f"non-positive pivot {pivot!r} at step {j}")
        col = K.col_aat(lp, theta_reg, p)
        col[p] += reg_dual[p]
        col -= L[:, :j] @ (d_l[:j] * L[p, :j])
        col /= pivot
        col[~free] = 0.0
        col[p] = 1.0
        L[:, j] = col
        d_l[j] = pivot
        pivots[j] = p
        free[p] = False
        diag -= pivot * col * col
    rest = np.flatnonzero(free)
    d_s = diag[rest]
    if np.any(d_s <= 0) or not np.all(np.isfinite(d_s)):
        raise NumericalFailure("non-positive Schur complement diagonal")
    L11 = np.asfortranarray(L[pivots])
    return PartialCholesky(pivots, rest, L11, L[rest], d_l, d_s.copy())


_trsv = get_blas_funcs("trsv", dtype=np.float64)


def apply_preconditioner(pc: PartialCholesky, r) -> np.ndarray:
    """Solve ``P z = r`` by forward substitution, diagonal scaling, back substitution."""
    r = np.asarray(r, dtype=float)
    r1, r2 = r[pc.pivots], r[pc.rest]
    u1 = _trsv(pc.L11, r1, lower=1, diag=1)
    u2 = r2 - pc.L21 @ u1
    z2 = u2 / pc.d_s
    v1 = u1 / pc.d_l - pc.L21.T @ z2
    z1 = _trsv(pc.L11, v1, lower=1, trans=1, diag=1)
    z = np.empty_like(r)
    z[pc.pivots] = z1
    z[pc.rest] = z2
    return z


@dataclass
class CgInfo:
    iterations: int
    residual: float
    converged: bool


def pcg_solve(lp, theta_reg, reg_dual, pc, g, tol: float, max_iters: int, x0=None):
    """Preconditioned CG on the regularized normal equations.

    Returns ``(dy, CgInfo)``; if the limit is hit the iterate with the
    smallest residual is returned with ``converged=False``.  ``x0`` is an
    optional starting guess; the tolerance stays relative to ``|g|``.
    """
    g = np.asarray(g, dtype=float)
    g_norm = np.linalg.norm(g)
    x = np.zeros_like(g)
    if g_norm == 0.0:
        return x, CgInfo(0, 0.0, True)
    r = g.copy()
    if x0 is not None:
        x = np.array(x0, dtype=float)
        r -= normal_matvec(lp, theta_reg, reg_dual, x)
    best_x, best_res = x.copy(), np.linalg.norm(r) / g_norm
    if best_res <= tol:
        return x, CgInfo(0, best_res, True)
    z = apply_preconditioner(pc, r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iters + 1):
        Gp = normal_matvec(lp, theta_reg, reg_dual, p)
        pGp = p @ Gp
        if not math.isfinite(pGp) or pGp <= 0:
            raise NumericalFailure(f"CG breakdown (p'Gp = {pGp!r})")
        a = rz / pGp
        x += a * p
        r -= a * Gp
        res = np.linalg.norm(r) / g_norm
        if not math.isfinite(res):
            raise NumericalFailure("CG produced non-finite residual")
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            return x, CgInfo(it, res, True)
        z = apply_preconditioner(pc, r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, CgInfo(max_iters, best_res, False)


@dataclass
class NewtonRhs:
    """Residuals of the linearized optimality conditions."""

    primal: np.ndarray
    dual: np.ndarray
    comp_lower: np.ndarray
    comp_upper: np.ndarray

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros(m), np.zeros(n), np.zeros(n), np.zeros(n))


def compute_direction(lp, state: IpmState, rhs: NewtonRhs, pc: PartialCholesky,
                      tol: float = 1e-6, max_iters: int = 1000, dy0=None):
    """Inexact Newton direction ``(dx, dy, ds, dw)`` via the regularized normal equations.

    Eliminates ``ds`` and ``dw`` from the complementarity rows, then ``dx``
    from the dual row, solves for ``dy`` by PCG and substitutes back.
    """
    x, s, w, u = state.x, state.s, state.w, state.u
    gap_u = u - x
    theta_reg = regularized_theta(state.theta, state.reg_primal)
    f = rhs.dual - rhs.comp_lower / x + rhs.comp_upper / gap_u
    g = K.a_times_x(lp, theta_reg * f) + rhs.primal
    dy, info = pcg_solve(lp, theta_reg, state.reg_dual, pc, g, tol, max_iters, dy0)
    dx = theta_reg * (K.at_times_y(lp, dy) - f)
    ds = (rhs.comp_lower - s * dx) / x
    dw = (rhs.comp_upper + w * dx) / gap_u
    return (dx, dy, ds, dw), info


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return math.inf
    return float(np.min(-v[neg] / dv[neg]))


def _step_length(state, direction, fraction, equal=True):
    """Primal and dual step lengths ``(a_p, a_d)`` under fraction-to-boundary."""
    dx, _, ds, dw = direction
    a_p = min(1.0, fraction * min(_max_step(state.x, dx), _max_step(state.u - state.x, -dx)))
    a_d = min(1.0, fraction * min(_max_step(state.s, ds), _max_step(state.w, dw)))
    if equal:
        a_p = a_d = min(a_p, a_d)
    return a_p, a_d


def _trial_mu(state, direction, steps):
    dx, _, ds, dw = direction
    a_p, a_d = steps
    x = state.x + a_p * dx
    s = state.s + a_d * ds
    w = state.w + a_d * dw
    return float(x @ s + (state.u - x) @ w) / (2 * x.size)


def initial_state(lp, q) -> IpmState:
    u = lp.u
    x = u / 2
    scale = max(1.0, float(np.abs(q).max()))
    n = lp.n_cols
    return IpmState(x, np.zeros(lp.n_rows), np.full(n, scale), np.full(n, scale), u)


STALL_DECREASE = 0.99

TRACE_FIELDS = ("iteration", "mu", "gap", "cg_iterations", "cg_residual",
                "primal_infeasibility", "dual_infeasibility", "step", "dual_step")


def solve(lp, settings: IpmSettings = IpmSettings(), trace_stream=None) -> IpmResult:
    """Maximize the visibility of an implicit LP; returns the critical visibility.

    Iterates are scored by ``max(gap / epsilon, infeasibility / feas_tol)``.
    When the inexact directions stop reducing this score by at least 1% for
    ``stall_iters`` iterations the solve ends with status ``"stalled"``.
    Unless the status is ``"optimal"`` the reported point is the best
    scored iterate, not the last one.

    ``trace_stream``, if given, receives one CSV line per iteration.
    """
    scale = settings.objective_scale
    q = -scale * lp.c
    b = lp.b
    m, n = lp.n_rows, lp.n_cols
    state = initial_state(lp, q)
    writer = None
    if trace_stream is not None:
        writer = csv.DictWriter(trace_stream, fieldnames=TRACE_FIELDS)
        writer.writeheader()
    b_norm, q_norm = 1.0 + np.linalg.norm(b), 1.0 + np.linalg.norm(q)
    result = IpmResult(math.nan, "iteration-limit", 0, 0, math.nan)
    best = progress = None
    for it in range(settings.max_ipm_iters + 1):
        xi_p = b - K.a_times_x(lp, state.x)
        xi_d = q - K.at_times_y(lp, state.y) - state.s + state.w
        pobj = float(q @ state.x)
        dobj = float(b @ state.y - state.u @ state.w)
        gap = abs(pobj - dobj) / (abs(pobj) + 1.0)
        pinf = np.linalg.norm(xi_p) / b_norm
        dinf = np.linalg.norm(xi_d) / q_norm
        mu = state.mu
        result.final_gap, result.primal_infeasibility, result.dual_infeasibility = gap, pinf, dinf
        result.mu_history.append(mu)
        if gap <= settings.epsilon and pinf <= settings.feas_tol and dinf <= settings.feas_tol:
            result.status = "optimal"
            best = None
            break
        merit = max(gap / settings.epsilon, max(pinf, dinf) / settings.feas_tol)
        if best is None or merit < best[0]:
            best = (merit, state.x, state.y, gap, pinf, dinf)
        # progress means a 1% drop in the merit; slower creep counts as a stall
        if progress is None or merit < STALL_DECREASE * progress[0]:
            progress = (merit, it)
        elif it - progress[1] >= settings.stall_iters:
            result.status = "stalled"
            break
        if it == settings.max_ipm_iters:
            break

        reg = max(settings.reg_scale * mu, settings.reg_floor)
        limit = settings.cg_limit(mu, m)
        for _ in range(settings.max_reg_escalations + 1):
            state.reg_primal = state.reg_dual = reg
            try:
                direction, cg_used, cg_info = _predictor_corrector(
                    lp, state, xi_p, xi_d, mu, settings, limit)
                break
            except NumericalFailure:
                reg *= 10
        else:
            result.status = "numerical-failure"
            break

        a_p, a_d = _step_length(state, direction, settings.step_fraction, settings.equal_steps)
        dx, dy, ds, dw = direction
        state.x = state.x + a_p * dx
        state.y = state.y + a_d * dy
        state.s = state.s + a_d * ds
        state.w = state.w + a_d * dw
        state.check_interior()
        result.ipm_iterations += 1
        result.total_cg_iterations += cg_used
        result.cg_iterations.append(cg_used)
        row = dict(iteration=it, mu=mu, gap=gap, cg_iterations=cg_used,
                   cg_residual=cg_info.residual, primal_infeasibility=pinf,
                   dual_infeasibility=dinf, step=a_p, dual_step=a_d)
        result.trace.append(row)
        if writer is not None:
            writer.writerow(row)
    result.x, result.y = state.x, state.y
    if best is not None:
        _, result.x, result.y, gap, pinf, dinf = best
        result.final_gap, result.primal_infeasibility, result.dual_infeasibility = gap, pinf, dinf
    result.objective = float(lp.c @ result.x)
    return result


def _predictor_corrector(lp, state, xi_p, xi_d, mu, settings, limit):
    """Mehrotra-style affine predictor followed by one centred corrector."""
    x, s, w, u = state.x, state.s, state.w, state.u
    pc = partial_cholesky(lp, state.theta, state.reg_primal, state.reg_dual, settings.chol_rank)
    tol = settings.eps_cg
    aff_rhs = NewtonRhs(xi_p, xi_d, -x * s, -(u - x) * w)
    aff, info_a = compute_direction(lp, state, aff_rhs, pc, tol, limit)
    mu_aff = _trial_mu(state, aff, _step_length(state, aff, 1.0, settings.equal_steps))
    sigma = min(max((mu_aff / mu) ** 3, settings.sigma_min), settings.sigma_max)
    dx_a, _, ds_a, dw_a = aff
    corr_rhs = NewtonRhs(
        xi_p,
        xi_d,
        sigma * mu - x * s - dx_a * ds_a,
        sigma * mu - (u - x) * w + dx_a * dw_a,
    )
    direction, info_c = compute_direction(lp, state, corr_rhs, pc, tol, limit, aff[1])
    used = info_a.iterations + info_c.iterations
    best_mu = _trial_mu(state, direction, _step_length(
        state, direction, settings.step_fraction, settings.equal_steps))
    info = info_c
    # corrector barely reduces mu: try plain centred steps, least centred first
    for sig in (settings.sigma_min, 0.1, 0.3, 0.5):
        if best_mu <= 0.99 * mu:
            break
        plain = NewtonRhs(xi_p, xi_d, sig * mu - x * s, sig * mu - (u - x) * w)
        alt, info_p = compute_direction(lp, state, plain, pc, tol, limit, aff[1])
        used += info_p.iterations
        alt_mu = _trial_mu(state, alt, _step_length(
            state, alt, settings.step_fraction, settings.equal_steps))
        if alt_mu < best_mu:
            direction, best_mu, info = alt, alt_mu, info_p
    return direction, used, info
