"""Implicit critical-visibility LP and its matrix-free operator kernels.

The LP is::

    max v   s.t.  sum_{a consistent with (o, r)} p(a) + v (d**-n - P(r|o)) = d**-n
                  0 <= p, v <= 1

with one row per retained (settings choice ``o``, joint outcome ``r``) pair
and one column per deterministic assignment ``a`` plus the visibility column.
Only the column indices of the unit entries and the dense last column are
stored, once row-wise and once column-wise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantum import ConfigError, ExperimentConfig, ProbabilityTable, reduced_outcome_mask


class IncompleteTableError(ValueError):
    pass


def reduced_row_set(config: ExperimentConfig) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Retained ``(o, r)`` rows in lexicographic order.

    A row is dropped when any observer gets outcome ``d - 1`` on an
    observable other than its first; the probability-summation row is never
    part of the system.
    """
    d, n = config.outcomes, config.n_observers
    outcomes = [tuple(int(v) for v in r) for r in np.indices((d,) * n).reshape(n, -1).T]
    rows = []
    for o in config.settings_choices():
        keep = reduced_outcome_mask(config, o)
        rows += [(o, outcomes[i]) for i in np.flatnonzero(keep)]
    return rows


def full_row_index(config: ExperimentConfig, o, r) -> int:
    """Zero-based position of ``(o, r)`` in the unreduced row ordering."""
    c = 0
    for oj, m in zip(o, config.observables):
        c = c * m + oj
    ri = 0
    for rj in r:
        ri = ri * config.outcomes + rj
    return c * config.outcomes**config.n_observers + ri


def _digit_weights(config: ExperimentConfig) -> list[list[int]]:
    """Column-index weight of digit ``a_j(i)``; observer 0, observable 0 most significant."""
    d = config.outcomes
    total = sum(config.observables)
    weights, pos = [], 0
    for m in config.observables:
        weights.append([d ** (total - 1 - (pos + i)) for i in range(m)])
        pos += m
    return weights


@dataclass(frozen=True, eq=False)
class ImplicitLp:
    """The reduced LP stored as unit-entry index lists plus one dense column.

    ``rows_by_index[i]`` lists the structural columns with a one in row
    ``i``; ``col_ptr``/``col_rows`` is the same pattern stored column-wise.
    The visibility variable is the last column, index ``n_cols - 1``.
    """

    config: ExperimentConfig
    row_ids: tuple
    rows_by_index: np.ndarray
    col_ptr: np.ndarray
    col_rows: np.ndarray
    last_column: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.rows_by_index.shape[0]

    @property
    def n_cols(self) -> int:
        return self.col_ptr.shape[0]

    @property
    def row_nnz(self) -> int:
        return self.rows_by_index.shape[1]

    @property
    def b(self) -> np.ndarray:
        d, n = self.config.outcomes, self.config.n_observers
        return np.full(self.n_rows, float(d) ** -n)

    @property
    def c(self) -> np.ndarray:
        c = np.zeros(self.n_cols)
        c[-1] = 1.0
        return c

    @property
    def u(self) -> np.ndarray:
        return np.ones(self.n_cols)

    @property
    def nbytes(self) -> int:
        """Bytes held by the index structures and the dense last column."""
        return (
            self.rows_by_index.nbytes
            + self.col_ptr.nbytes
            + self.col_rows.nbytes
            + self.last_column.nbytes
        )

    def col_counts(self) -> np.ndarray:
        return np.diff(self.col_ptr)


def _structure(config: ExperimentConfig, row_ids) -> np.ndarray:
    d = config.outcomes
    weights = _digit_weights(config)
    idx_dtype = np.int32 if config.n_columns_structural < 2**31 else np.int64
    width = math.prod(d ** (m - 1) for m in config.observables)
    out = np.empty((len(row_ids), width), dtype=idx_dtype)
    # rows sharing a settings choice share the same free digits
    offsets_cache: dict = {}
    for i, (o, r) in enumerate(row_ids):
        offsets = offsets_cache.get(o)
        if offsets is None:
            free = [w for j, ws in enumerate(weights) for k, w in enumerate(ws) if k != o[j]]
            offsets = np.zeros(1, dtype=np.int64)
            for w in free:
                offsets = (offsets[:, None] + w * np.arange(d)[None, :]).ravel()
            offsets = np.sort(offsets)
            offsets_cache[o] = offsets
        fixed = sum(rj * weights[j][o[j]] for j, rj in enumerate(r))
        out[i] = fixed + offsets
    return out


def _transpose(rows: np.ndarray, n_struct: int) -> tuple[np.ndarray, np.ndarray]:
    flat = rows.ravel()
    order = np.argsort(flat, kind="stable")
    col_rows = (order // rows.shape[1]).astype(rows.dtype)
    counts = np.bincount(flat, minlength=n_struct)
    col_ptr = np.zeros(n_struct + 1, dtype=np.int64)
    np.cumsum(counts, out=col_ptr[1:])
    return col_ptr, col_rows


def build_lp(config: ExperimentConfig, table: ProbabilityTable) -> ImplicitLp:
    """Assemble the implicit reduced LP from a probability table."""
    if table.config != config:
        raise ConfigError("probability table was built for a different configuration")
    row_ids = tuple(reduced_row_set(config))
    d, n = config.outcomes, config.n_observers
    noise = float(d) ** -n
    last = np.empty(len(row_ids))
    for i, (o, r) in enumerate(row_ids):
        p = table.get(o, r)
        if not math.isfinite(p):
            raise IncompleteTableError(f"no probability for settings {o}, outcome {r}")
        last[i] = noise - min(max(p, 0.0), 1.0)
    rows = _structure(config, row_ids)
    col_ptr, col_rows = _transpose(rows, config.n_columns_structural)
    for arr in (rows, col_ptr, col_rows, last):
        arr.setflags(write=False)
    return ImplicitLp(config, row_ids, rows, col_ptr, col_rows, last)


def with_last_column(lp: ImplicitLp, table: ProbabilityTable) -> ImplicitLp:
    """Same structure with a new last column; reuses the index arrays."""
    noise = float(lp.config.outcomes) ** -lp.config.n_observers
    last = np.empty(lp.n_rows)
    for i, (o, r) in enumerate(lp.row_ids):
        p = table.get(o, r)
        if not math.isfinite(p):
            raise IncompleteTableError(f"no probability for settings {o}, outcome {r}")
        last[i] = noise - min(max(p, 0.0), 1.0)
    last.setflags(write=False)
    return ImplicitLp(lp.config, lp.row_ids, lp.rows_by_index, lp.col_ptr, lp.col_rows, last)


def _check_len(vec, n, what):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise ConfigError(f"{what} has shape {vec.shape}, expected ({n},)")
    return vec


def a_times_x(lp: ImplicitLp, x) -> np.ndarray:
    x = _check_len(x, lp.n_cols, "x")
    return x[lp.rows_by_index].sum(axis=1) + lp.last_column * x[-1]


def at_times_y(lp: ImplicitLp, y) -> np.ndarray:
    y = _check_len(y, lp.n_rows, "y")
    out = np.empty(lp.n_cols)
    # every structural column is covered by at least one retained row
    out[:-1] = np.add.reduceat(y[lp.col_rows], lp.col_ptr[:-1])
    out[-1] = lp.last_column @ y
    return out


def diag_aat(lp: ImplicitLp, theta) -> np.ndarray:
    """Diagonal of ``A diag(theta) A^T``."""
    theta = _check_len(theta, lp.n_cols, "theta")
    return theta[lp.rows_by_index].sum(axis=1) + theta[-1] * lp.last_column**2


def _gather_ranges(ptr: np.ndarray, cols: np.ndarray) -> np.ndarray:
    starts = ptr[cols]
    lens = ptr[cols + 1] - starts
    shift = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return shift + np.arange(lens.sum())


def col_aat(lp: ImplicitLp, theta, i: int) -> np.ndarray:
    """Column ``i`` of ``A diag(theta) A^T`` from the column-wise adjacency."""
    theta = _check_len(theta, lp.n_cols, "theta")
    if not 0 <= i < lp.n_rows:
        raise IndexError(f"row index {i} out of range [0, {lp.n_rows})")
    cols = lp.rows_by_index[i]
    pos = _gather_ranges(lp.col_ptr, cols)
    weights = np.repeat(theta[cols], np.diff(lp.col_ptr)[cols])
    out = np.bincount(lp.col_rows[pos], weights=weights, minlength=lp.n_rows)
    out += theta[-1] * lp.last_column[i] * lp.last_column
    # diagonal entry summed exactly as diag_aat does
    out[i] = theta[cols].sum() + theta[-1] * lp.last_column[i] ** 2
    return out
