"""Downhill simplex (Nelder-Mead) search for the minimal critical visibility.

The search runs over the flat angle vector with the classic amoeba
update: reflection 1, expansion 2, contraction 0.5 and shrink 0.5.  A run
stops when the fractional spread of the simplex values

    2 |f_high - f_low| / (|f_high| + |f_low| + 1e-10)

drops to ``ftol`` or below.  Each restart begins from a simplex whose
vertices are all drawn at random over the angle domain.  A converged
simplex is rebuilt around its best vertex, with edge ``initial_step``, and
run again until a rebuild gains no more than ``ftol`` in the
same relative sense, since a simplex that has collapsed on a plateau often
reports convergence too early.  Several independent restarts from random
angles are made and the best one is reported.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp_builder, mf_ipm, reference
from .quantum import (
    AngleVector,
    ExperimentConfig,
    ObservableSetting,
    PureState,
    probability_table,
)

TINY = 1e-10


class ObjectiveError(RuntimeError):
    """An objective evaluation failed; the current restart is abandoned."""


@dataclass(frozen=True)
class DsmSettings:
    ftol: float = 0.01
    max_evaluations: int = 2000
    restarts: int = 5
    rng_seed: int = 0
    initial_step: float = 0.5

    def __post_init__(self):
        if not self.ftol > 0:
            raise ValueError("ftol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be at least 1")


@dataclass
class DsmResult:
    """Outcome of :func:`minimize`.

    ``per_restart_*`` lists have one entry per restart that was not
    aborted, in restart order; ``aborted`` holds ``(restart, message)``.
    """

    best_value: float
    best_angles: AngleVector
    evaluations: int
    converged: bool
    per_restart_values: list[float] = field(default_factory=list)
    per_restart_evaluations: list[int] = field(default_factory=list)
    per_restart_seconds: list[float] = field(default_factory=list)
    aborted: list[tuple[int, str]] = field(default_factory=list)
    best_restart: int = 0


class VisibilityObjective:
    """Angle vector -> critical visibility, one LP solve per call.

    ``evaluations`` counts calls and ``last_status`` holds the solver status
    of the latest one.  Solver failures raise :class:`ObjectiveError`.
    """

    def __init__(self, state: PureState, config: ExperimentConfig, solver: str = "ipm",
                 settings=None):
        if solver not in ("ipm", "simplex"):
            raise ValueError(f"unknown solver {solver!r}")
        if state.n_observers != config.n_observers:
            raise ValueError("state and configuration disagree on the number of observers")
        self.state = state
        self.config = config
        self.solver = solver
        self.settings = settings
        self.evaluations = 0
        self.last_status = ""
        self._lp = None

    def solve_lp(self, lp):
        """Return ``(value, status)`` for an already built LP."""
        if self.solver == "ipm":
            res = mf_ipm.solve(lp, self.settings or mf_ipm.IpmSettings())
            if res.status == "numerical-failure":
                raise ObjectiveError("interior point solver broke down")
            return res.objective, res.status
        kwargs = dict(self.settings or {})
        try:
            res = reference.simplex_solve(reference.materialize_dense(lp), **kwargs)
        except reference.OracleError as exc:
            raise ObjectiveError(str(exc)) from None
        if res.status != "optimal":
            raise ObjectiveError(f"simplex ended with status {res.status}")
        return res.objective, res.status

    def __call__(self, angles: AngleVector) -> float:
        self.evaluations += 1
        table = probability_table(self.state, self.config, angles)
        if self._lp is None:
            self._lp = lp_builder.build_lp(self.config, table)
        else:
            self._lp = lp_builder.with_last_column(self._lp, table)
        value, self.last_status = self.solve_lp(self._lp)
        if not math.isfinite(value):
            raise ObjectiveError("objective returned a non-finite value")
        return value


def critical_visibility_objective(state: PureState, config: ExperimentConfig,
                                  solver: str = "ipm", settings=None) -> VisibilityObjective:
    """Objective for :func:`minimize`.

    ``settings`` is an :class:`~critvis.mf_ipm.IpmSettings` for ``"ipm"`` or
    a dict of :func:`~critvis.reference.simplex_solve` keywords for
    ``"simplex"``.
    """
    return VisibilityObjective(state, config, solver, settings)


def _spread(hi, lo):
    return 2.0 * abs(hi - lo) / (abs(hi) + abs(lo) + TINY)


def axis_simplex(x0, step) -> np.ndarray:
    """``x0`` plus ``x0 + step * e_i`` for every coordinate ``i``."""
    x0 = np.asarray(x0, dtype=float)
    p = np.tile(x0, (x0.size + 1, 1))
    p[1:] += step * np.eye(x0.size)
    return p


def nelder_mead(f, simplex, ftol: float, max_evaluations: int):
    """Amoeba minimization of ``f`` from the ``(ndim + 1, ndim)`` array ``simplex``.

    Returns ``(x_best, f_best, evaluations, converged)``; ``converged`` is
    False when ``max_evaluations`` ran out first.
    """
    p = np.array(simplex, dtype=float)
    ndim = p.shape[1]
    if p.shape != (ndim + 1, ndim):
        raise ValueError(f"simplex has shape {p.shape}, expected ({ndim + 1}, {ndim})")
    y = np.empty(ndim + 1)
    evals = 0
    for i in range(ndim + 1):
        y[i] = f(p[i])
        evals += 1
    psum = p.sum(axis=0)

    def trial(ihi, fac):
        nonlocal psum, evals
        fac1 = (1.0 - fac) / ndim
        fac2 = fac1 - fac
        ptry = psum * fac1 - p[ihi] * fac2
        ytry = f(ptry)
        evals += 1
        if ytry < y[ihi]:
            y[ihi] = ytry
            psum = psum + ptry - p[ihi]
            p[ihi] = ptry
        return ytry

    while True:
        order = np.argsort(y, kind="stable")
        ilo, ihi, inhi = order[0], order[-1], order[-2]
        if _spread(y[ihi], y[ilo]) <= ftol:
            return p[ilo].copy(), float(y[ilo]), evals, True
        if evals >= max_evaluations:
            return p[ilo].copy(), float(y[ilo]), evals, False
        ytry = trial(ihi, -1.0)
        if ytry <= y[ilo]:
            trial(ihi, 2.0)
        elif ytry >= y[inhi]:
            ysave = y[ihi]
            ytry = trial(ihi, 0.5)
            if ytry >= ysave:
                for i in range(ndim + 1):
                    if i != ilo:
                        p[i] = 0.5 * (p[i] + p[ilo])
                        y[i] = f(p[i])
                        evals += 1
                psum = p.sum(axis=0)


def _relaunched(f, start, settings: DsmSettings):
    budget = settings.max_evaluations
    x, fx, used, conv = nelder_mead(f, start, settings.ftol, budget)
    budget -= used
    while conv and budget > 0:
        x_new, f_new, used, conv = nelder_mead(
            f, axis_simplex(x, settings.initial_step), settings.ftol, budget)
        budget -= used
        gained = f_new < fx and _spread(fx, f_new) > settings.ftol
        if f_new < fx:
            x, fx = x_new, f_new
        if not gained:
            break
    return x, fx, conv


TRACE_FIELDS = ("evaluation", "restart", "value", "status", "angles")


def minimize(objective, config: ExperimentConfig, settings: DsmSettings = DsmSettings(),
             trace_stream=None) -> DsmResult:
    """Minimize ``objective(AngleVector)`` over the angles of ``config``.

    Restart ``i`` draws its start from the ``i``-th child of
    ``SeedSequence(settings.rng_seed)``, so restarts are reproducible
    independently of each other.  A restart whose objective raises
    :class:`ObjectiveError` is abandoned; if all are, the last error is
    re-raised.
    """
    writer = None
    if trace_stream is not None:
        writer = csv.DictWriter(trace_stream, fieldnames=TRACE_FIELDS)
        writer.writeheader()
    children = np.random.SeedSequence(settings.rng_seed).spawn(settings.restarts)
    counter = 0
    best = None
    values, evals, seconds, converged_flags, aborted = [], [], [], [], []
    last_error = None
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        start = np.array([AngleVector.random(config, rng).flat()
                          for _ in range(config.n_angles + 1)])

        def f(flat, k=k):
            nonlocal counter
            angles = AngleVector.from_flat(config, flat)
            value = float(objective(angles))
            counter += 1
            if writer is not None:
                writer.writerow(dict(
                    evaluation=counter, restart=k, value=repr(value),
                    status=getattr(objective, "last_status", ""),
                    angles=" ".join(repr(float(a)) for a in flat)))
            return value

        t0 = time.perf_counter()
        before = counter
        try:
            x, fx, conv = _relaunched(f, start, settings)
        except ObjectiveError as exc:
            aborted.append((k, str(exc)))
            last_error = exc
            continue
        values.append(fx)
        evals.append(counter - before)
        seconds.append(time.perf_counter() - t0)
        converged_flags.append(conv)
        if best is None or fx < best[0]:
            best = (fx, x, k, conv)
    if best is None:
        raise last_error
    fx, x, k, conv = best
    angles = AngleVector.from_flat(config, x).normalized()
    return DsmResult(fx, angles, counter, conv, values, evals, seconds, aborted, k)


def ghz_reference_angles(n: int) -> AngleVector:
    """Equatorial settings at which the GHZ state attains ``v_c = 2**((1 - n) / 2)``.

    Every observer measures at azimuths ``0`` and ``pi/2``; for even ``n``
    the first observer's pair is rotated by ``-pi/4``.
    """
    config = ExperimentConfig.uniform(n)
    settings = []
    for j in range(n):
        off = -math.pi / 4 if (j == 0 and n % 2 == 0) else 0.0
        settings.append((ObservableSetting(math.pi / 2, off % (2 * math.pi)),
                         ObservableSetting(math.pi / 2, math.pi / 2 + off)))
    angles = AngleVector(tuple(settings))
    angles.check(config)
    return angles
