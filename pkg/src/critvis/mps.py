"""Fixed-format MPS export and import of the dense-equivalent LP.

Names sit in the fixed MPS columns; numbers are written with full
``repr`` precision so a round trip is exact, which pushes long values past
column 36.  The reader therefore splits on whitespace.  The file always
states a minimization, so the visibility objective is written negated.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .lp_builder import ImplicitLp
from .reference import DenseLp, materialize_dense

MAX_EXPORT_NNZ = 10**6


class MpsError(ValueError):
    pass


def _num(v: float) -> str:
    return repr(float(v))


def write_mps(lp, path, name: str = "CRITVIS") -> None:
    """Write an :class:`ImplicitLp` or :class:`DenseLp` to ``path``."""
    if isinstance(lp, ImplicitLp):
        nnz = lp.n_rows * lp.row_nnz + int(np.count_nonzero(lp.last_column)) + 1
        if nnz > MAX_EXPORT_NNZ:
            raise MpsError(f"{nnz} nonzeros exceed the export cap of {MAX_EXPORT_NNZ}")
        dense = materialize_dense(lp)
    else:
        dense = lp
        nnz = int(np.count_nonzero(dense.A)) + int(np.count_nonzero(dense.c))
        if nnz > MAX_EXPORT_NNZ:
            raise MpsError(f"{nnz} nonzeros exceed the export cap of {MAX_EXPORT_NNZ}")
    m, n = dense.A.shape
    rows = dense.row_names or [f"R{i}" for i in range(m)]
    cols = dense.col_names or [f"P{j}" for j in range(n - 1)] + ["VIS"]
    out = [
        f"NAME          {name}",
        "* maximization problem: objective row holds the negated objective",
        "ROWS",
        " N  OBJ",
    ]
    out += [f" E  {r}" for r in rows]
    out.append("COLUMNS")
    for j, cname in enumerate(cols):
        if dense.c[j] != 0:
            out.append(f"    {cname:<8}  {'OBJ':<8}  {_num(-dense.c[j])}")
        for i in np.flatnonzero(dense.A[:, j]):
            out.append(f"    {cname:<8}  {rows[i]:<8}  {_num(dense.A[i, j])}")
    out.append("RHS")
    for i in np.flatnonzero(dense.b):
        out.append(f"    {'RHS':<8}  {rows[i]:<8}  {_num(dense.b[i])}")
    out.append("BOUNDS")
    for j, cname in enumerate(cols):
        if np.isfinite(dense.u[j]):
            out.append(f" UP {'BND':<8}  {cname:<8}  {_num(dense.u[j])}")
    out.append("ENDATA")
    Path(path).write_text("\n".join(out) + "\n")


def read_mps(path) -> DenseLp:
    """Read an MPS file into a maximization :class:`DenseLp`.

    Only equality rows, lower bound 0 and ``UP`` bounds are supported, which
    covers what :func:`write_mps` produces.
    """
    section = None
    obj_row = None
    row_index: dict[str, int] = {}
    col_index: dict[str, int] = {}
    entries, cost, rhs, ub = [], {}, {}, {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            if section not in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
                raise MpsError(f"line {lineno}: unsupported section {section}")
            continue
        f = raw.split()
        if section == "ROWS":
            kind, rname = f
            if kind == "N":
                obj_row = obj_row or rname
            elif kind == "E":
                row_index[rname] = len(row_index)
            else:
                raise MpsError(f"line {lineno}: only E rows are supported, got {kind}")
        elif section == "COLUMNS":
            cname = f[0]
            if cname not in col_index:
                col_index[cname] = len(col_index)
            j = col_index[cname]
            for rname, val in zip(f[1::2], f[2::2]):
                if rname == obj_row:
                    cost[j] = float(val)
                elif rname in row_index:
                    entries.append((row_index[rname], j, float(val)))
                else:
                    raise MpsError(f"line {lineno}: unknown row {rname}")
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                rhs[row_index[rname]] = float(val)
        elif section == "BOUNDS":
            kind, _, cname, val = f
            if kind != "UP":
                raise MpsError(f"line {lineno}: only UP bounds are supported, got {kind}")
            ub[col_index[cname]] = float(val)
    m, n = len(row_index), len(col_index)
    A = np.zeros((m, n))
    for i, j, v in entries:
        A[i, j] = v
    b = np.zeros(m)
    for i, v in rhs.items():
        b[i] = v
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = -v
    u = np.full(n, np.inf)
    for j, v in ub.items():
        u[j] = v
    return DenseLp(A, b, c, u, list(row_index), list(col_index))
