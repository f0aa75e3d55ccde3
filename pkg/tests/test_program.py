import io

import numpy as np
import pytest

from dsoled.program import (
    INF,
    ProgramBuilder,
    RowTag,
    complete_binaries,
    completion_rows,
    propagate_bounds,
    row_activity_range,
)


def _two_vars(x_ub=3.0, y_ub=INF):
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", ub=x_ub)
    y = builder.add_variable("y", (0,), "t", ub=y_ub)
    builder.add_eq({x: 1.0, y: 1.0}, 10.0, RowTag("bal", (0,), "t"))
    builder.add_linear(x, 2.0)
    builder.add_quadratic(y, 4.0)
    return builder.build({"horizon": 1})


def test_registry():
    prog = _two_vars()

    assert prog.n_vars == 2
    assert prog.n_eq == 1
    assert prog.n_constraints == 1
    assert prog.var("t.x[0]") == 0
    assert prog.lookup("y", (0,), "t") == 1
    assert prog.lookup("y", (1,), "t") is None
    assert prog.indices_of("x") == [0]
    assert prog.is_convex
    assert prog.meta["horizon"] == 1
    assert prog.row_counts() == {"bal": 1}


def test_duplicate_variable():
    builder = ProgramBuilder()
    builder.add_variable("x", (0,), "t")

    with pytest.raises(AssertionError):
        builder.add_variable("x", (0,), "t")


def test_objective_uses_half_diagonal():
    prog = _two_vars()

    # 2 * 1 + 4 / 2 * 3^2
    assert prog.objective_value(np.array([1.0, 3.0])) == pytest.approx(20.0)


def test_evaluate_reports_worst_row():
    prog = _two_vars()

    report = prog.evaluate(np.array([1.0, 1.0]))
    assert report.by_kind["eq"] == pytest.approx(8.0)
    assert report.worst == "t.bal[0]"
    assert not report.ok(1e-6)

    assert prog.evaluate(np.array([3.0, 7.0])).ok(1e-9)

    bounds = prog.evaluate(np.array([4.0, 6.0]))
    assert bounds.by_kind["bounds"] == pytest.approx(1.0)
    assert bounds.worst == "t.x[0]"


def test_fix_and_with_bounds():
    prog = _two_vars()
    fixed = prog.fix({0: 2.0})

    assert fixed.lb[0] == fixed.ub[0] == 2.0
    assert prog.ub[0] == 3.0


def test_add_program_offsets_columns():
    inner = _two_vars()
    builder = ProgramBuilder()
    builder.add_variable("z", (0,), "other")
    columns = builder.add_program(inner)
    prog = builder.build()

    assert columns.tolist() == [1, 2]
    assert prog.a_eq.toarray().tolist() == [[0.0, 1.0, 1.0]]
    assert prog.c.tolist() == [0.0, 2.0, 0.0]
    assert prog.q_diag.tolist() == [0.0, 0.0, 4.0]


def test_cone_residuals():
    builder = ProgramBuilder()
    idx = [builder.add_variable(kind, (0,), "d", lb=-INF) for kind in ("l", "v", "p", "q")]
    builder.add_cone(*idx, RowTag("branch_cone", (0,), "d"))
    prog = builder.build()

    tight = np.array([1.0, 1.0, 0.6, 0.8])
    loose = np.array([1.0, 1.0, 0.3, 0.8])
    np.testing.assert_allclose(prog.cones.residuals(tight), [0.0], atol=1e-12)
    np.testing.assert_allclose(prog.cones.residuals(loose), [0.27])
    assert prog.evaluate(loose).by_kind["cone"] == 0.0

    outside = np.array([1.0, 1.0, 1.0, 1.0])
    assert prog.evaluate(outside).by_kind["cone"] > 0


def test_propagate_bounds_tightens():
    result = propagate_bounds(_two_vars())

    assert not result.infeasible
    assert result.lb[1] == pytest.approx(7.0)
    assert result.ub[1] == pytest.approx(10.0)
    assert result.ub[0] == pytest.approx(3.0)


def test_propagate_bounds_detects_infeasibility():
    result = propagate_bounds(_two_vars(y_ub=5.0))

    assert result.infeasible


def test_propagate_bounds_rounds_binaries():
    builder = ProgramBuilder()
    b = builder.add_variable("y", (0,), "d", ub=1.0, binary=True)
    builder.add_le({b: 2.0}, 1.0, RowTag("gate", (0,), "d"))
    result = propagate_bounds(builder.build())

    assert result.ub[b] == 0.0


def test_row_activity_range():
    prog = _two_vars()
    low, high = row_activity_range(prog.a_eq, np.array([0.0, 1.0]), np.array([3.0, 2.0]))

    assert low.tolist() == [1.0]
    assert high.tolist() == [5.0]


def test_complete_binaries():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "d", ub=10.0)
    b = builder.add_variable("y", (0,), "d", ub=1.0, binary=True)
    builder.add_le({x: 1.0, b: -5.0}, 0.0, RowTag("gate", (0,), "d"))
    prog = builder.build()
    rows_of = completion_rows(prog)

    assert rows_of == {b: [(0, -5.0)]}
    completed = complete_binaries(prog, np.array([2.0, 0.3]), rows_of, tol=1e-9)
    assert completed.tolist() == [2.0, 1.0]
    assert complete_binaries(prog, np.array([6.0, 0.3]), rows_of, tol=1e-9) is None


def test_write_sparse_header():
    out = io.StringIO()
    _two_vars().write_sparse(out)
    lines = out.getvalue().splitlines()

    assert lines[0] == "# dsoled canonical program v1"
    assert lines[1] == "size 2 1 0 0"
    assert "var 0 t.x[0] x C 0.0 3.0" in lines
    assert "var 1 t.y[0] y C 0.0 inf" in lines
    assert "eq 0 t.bal[0] 10.0" in lines
    assert "eq_a 0 1 1.0" in lines
