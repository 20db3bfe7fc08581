"""Standard-form MILP container shared by the model builder and the solver kernel."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "L", "E", "G"


@dataclass
class MilpProblem:
    """min c.x  s.t.  A x (sense) b,  lb <= x <= ub,  x_k in {0,1} for k in binaries.

    ``A`` is kept in triplet form (rows, cols, vals); ``names`` maps every column
    to a (symbol, *indices) tuple and ``row_family`` tags every row with the
    constraint family it materializes.
    """

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binaries: np.ndarray
    names: list = field(default_factory=list)
    row_family: list = field(default_factory=list)
    obj_offset: float = 0.0
    layout: object = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=float)
        self.senses = np.asarray(self.senses, dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.binaries = np.asarray(self.binaries, dtype=np.int64)

    @property
    def n_cols(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    def matrix(self) -> sp.csc_matrix:
        return sp.csc_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols)
        )

    def check(self) -> list[str]:
        """Structural consistency problems (empty list when the problem is well formed)."""
        errs = []
        n, m = self.n_cols, self.n_rows
        for name, arr in (("lb", self.lb), ("ub", self.ub)):
            if arr.shape != (n,):
                errs.append(f"{name} has shape {arr.shape}, expected ({n},)")
        if self.senses.shape != (m,):
            errs.append("senses/rhs length mismatch")
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            errs.append("triplet arrays differ in length")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= m):
            errs.append("row index out of range")
        if self.cols.size and (self.cols.min() < 0 or self.cols.max() >= n):
            errs.append("column index out of range")
        if not np.all(np.isfinite(self.c)) or not np.all(np.isfinite(self.vals)):
            errs.append("non-finite coefficient")
        if not np.all(np.isin(self.senses, [LE, EQ, GE])):
            errs.append("unknown row sense")
        for k in self.binaries:
            if not (0.0 <= self.lb[k] and self.ub[k] <= 1.0):
                errs.append(f"binary column {k} has bounds outside [0,1]")
        if self.names:
            if len(self.names) != n or len(set(self.names)) != n:
                errs.append("column name map is not a bijection")
        return errs

    def with_bounds(self, lb=None, ub=None) -> "MilpProblem":
        return replace(
            self,
            lb=self.lb if lb is None else np.asarray(lb, dtype=float),
            ub=self.ub if ub is None else np.asarray(ub, dtype=float),
        )

    def relaxed(self) -> "MilpProblem":
        return replace(self, binaries=np.zeros(0, dtype=np.int64))

    def column_index(self) -> dict:
        return {name: k for k, name in enumerate(self.names)}

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        act = np.zeros(self.n_rows)
        np.add.at(act, self.rows, self.vals * x[self.cols])
        return act

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.obj_offset

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for fam in self.row_family:
            out[fam] = out.get(fam, 0) + 1
        return out

    def to_mps(self, path: str | Path, name: str = "BQP") -> None:
        """Write fixed-format MPS (column/row names are positional: C0000001, R0000001)."""
        write_mps(self, path, name)


def _mps_num(v: float) -> str:
    s = f"{v:.12g}"
    return s if len(s) <= 12 else f"{v:.6e}"


def write_mps(prob: MilpProblem, path: str | Path, name: str = "BQP") -> None:
    A = prob.matrix()
    binset = set(int(k) for k in prob.binaries)
    cname = [f"C{k:07d}" for k in range(prob.n_cols)]
    rname = [f"R{i:07d}" for i in range(prob.n_rows)]
    lines = [f"NAME          {name}", "ROWS", " N  COST"]
    for i, s in enumerate(prob.senses):
        lines.append(f" {s}  {rname[i]}")
    lines.append("COLUMNS")
    in_int = False
    for k in range(prob.n_cols):
        is_bin = k in binset
        if is_bin and not in_int:
            lines.append("    MARKER                 'MARKER'                 'INTORG'")
            in_int = True
        elif not is_bin and in_int:
            lines.append("    MARKER                 'MARKER'                 'INTEND'")
            in_int = False
        entries = [("COST", prob.c[k])] if prob.c[k] != 0 else []
        start, end = A.indptr[k], A.indptr[k + 1]
        entries += [(rname[A.indices[p]], A.data[p]) for p in range(start, end)]
        if not entries:
            entries = [("COST", 0.0)]
        for rn, v in entries:
            lines.append(f"    {cname[k]:<8}  {rn:<8}  {_mps_num(v):>12}")
    if in_int:
        lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    for i, v in enumerate(prob.rhs):
        if v != 0:
            lines.append(f"    RHS       {rname[i]:<8}  {_mps_num(v):>12}")
    lines.append("BOUNDS")
    for k in range(prob.n_cols):
        lo, hi = prob.lb[k], prob.ub[k]
        if k in binset and lo == 0 and hi == 1:
            lines.append(f" BV BND       {cname[k]:<8}")
            continue
        if lo == hi:
            lines.append(f" FX BND       {cname[k]:<8}  {_mps_num(lo):>12}")
            continue
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" FR BND       {cname[k]:<8}")
            continue
        if lo != 0:
            lines.append(
                f" MI BND       {cname[k]:<8}"
                if np.isinf(lo)
                else f" LO BND       {cname[k]:<8}  {_mps_num(lo):>12}"
            )
        if not np.isinf(hi):
            lines.append(f" UP BND       {cname[k]:<8}  {_mps_num(hi):>12}")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def stack_problem(
    c: Sequence[float],
    rows: Sequence[int],
    cols: Sequence[int],
    vals: Sequence[float],
    senses: Sequence[str],
    rhs: Sequence[float],
    lb: Sequence[float] | None = None,
    ub: Sequence[float] | None = None,
    binaries: Sequence[int] = (),
) -> MilpProblem:
    """Convenience constructor for hand-written test problems."""
    n = len(c)
    return MilpProblem(
        c=np.asarray(c, float),
        rows=rows,
        cols=cols,
        vals=vals,
        senses=senses,
        rhs=rhs,
        lb=np.zeros(n) if lb is None else lb,
        ub=np.full(n, np.inf) if ub is None else ub,
        binaries=np.asarray(binaries, dtype=np.int64),
        names=[("x", k) for k in range(n)],
    )


def dense_problem(c, A, senses, b, lb=None, ub=None, binaries=()) -> MilpProblem:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    r, k = np.nonzero(A)
    return stack_problem(c, r, k, A[r, k], list(senses), b, lb, ub, binaries)
