import numpy as np
import pytest

from pelletsc.problem import EQ, GE, LE, MilpProblem, dense_problem, stack_problem


def _read_mps(path):
    """Minimal fixed-format reader: enough to round-trip what write_mps emits."""
    section, rows, obj = None, {}, "COST"
    c, A, b, lb, ub, ints = {}, {}, {}, {}, {}, set()
    in_int = False
    for line in path.read_text().splitlines():
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        tok = line.split()
        if section == "ROWS":
            rows[tok[1]] = tok[0]
        elif section == "COLUMNS":
            if tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            col, row, val = tok[0], tok[1], float(tok[2])
            if in_int:
                ints.add(col)
            if row == obj:
                c[col] = val
            else:
                A[(row, col)] = val
        elif section == "RHS":
            b[tok[1]] = float(tok[2])
        elif section == "BOUNDS":
            kind, col = tok[0], tok[2]
            if kind == "BV":
                lb[col], ub[col] = 0.0, 1.0
            elif kind == "FX":
                lb[col] = ub[col] = float(tok[3])
            elif kind == "LO":
                lb[col] = float(tok[3])
            elif kind == "UP":
                ub[col] = float(tok[3])
            elif kind == "MI":
                lb[col] = -np.inf
            elif kind == "FR":
                lb[col], ub[col] = -np.inf, np.inf
    return rows, c, A, b, lb, ub, ints


def test_mps_round_trip(tmp_path):
    p = dense_problem([1.5, -2, 0, 3], [[1, 2, 0, 0], [0, 1, -1, 0], [0, 0, 0, 4]],
                      [LE, EQ, GE], [4, 0, 1], [0, -np.inf, 2, 0], [1, 5, 2, np.inf],
                      binaries=[0])
    path = tmp_path / "p.mps"
    p.to_mps(path)
    rows, c, A, b, lb, ub, ints = _read_mps(path)
    assert list(rows.values())[1:] == [LE, EQ, GE]
    dense = p.matrix().toarray()
    for (r, col), v in A.items():
        assert dense[int(r[1:]), int(col[1:])] == pytest.approx(v)
    assert len(A) == np.count_nonzero(dense)
    assert {int(k[1:]): v for k, v in c.items() if v} == {0: 1.5, 1: -2.0, 3: 3.0}
    assert {int(k[1:]): v for k, v in b.items()} == {0: 4.0, 2: 1.0}
    assert ints == {"C0000000"}
    assert lb["C0000001"] == -np.inf and ub["C0000001"] == 5.0
    assert lb["C0000002"] == ub["C0000002"] == 2.0


def test_check_reports_structural_problems():
    p = dense_problem([1, 1], [[1, 1]], [LE], [1])
    assert p.check() == []
    bad = MilpProblem(c=[1.0], rows=[0], cols=[3], vals=[1.0], senses=["X"], rhs=[0.0],
                      lb=[0.0], ub=[2.0], binaries=[0], names=[("x",)])
    msgs = " ".join(bad.check())
    assert "column index out of range" in msgs
    assert "unknown row sense" in msgs
    assert "binary column 0" in msgs


def test_duplicate_names_are_rejected():
    p = stack_problem([0, 0], [], [], [], [], [])
    p.names = [("x", 0), ("x", 0)]
    assert any("bijection" in m for m in p.check())


def test_row_activity_and_objective():
    p = dense_problem([1, 2], [[1, 1], [2, -1]], [LE, LE], [3, 1])
    x = np.array([1.0, 2.0])
    assert np.allclose(p.row_activity(x), [3.0, 0.0])
    p.obj_offset = 0.5
    assert p.objective(x) == pytest.approx(5.5)


def test_relaxed_and_with_bounds_do_not_mutate():
    p = dense_problem([1], [[1]], [LE], [1], [0], [1], binaries=[0])
    q = p.relaxed().with_bounds(ub=[0.5])
    assert p.binaries.tolist() == [0] and p.ub.tolist() == [1.0]
    assert q.binaries.size == 0 and q.ub.tolist() == [0.5]


def test_family_counts():
    p = dense_problem([1], [[1], [1]], [LE, LE], [1, 2])
    p.row_family = ["a", "a"]
    assert p.family_counts() == {"a": 2}
