import numpy as np
import pytest

from dsoled.conic import CvxpySolver, SolveStatus, equality_dual_sign
from dsoled.program import INF, ProgramBuilder, RowTag


def test_equality_dual_convention():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", lb=-INF)
    builder.add_eq({x: 1.0}, 1.0, RowTag("fix", (0,)))
    builder.add_linear(x, 1.0)

    result = CvxpySolver().solve(builder.build())

    assert result.ok
    assert result.x[x] == pytest.approx(1.0, abs=1e-7)
    # stationarity 1 + lambda = 0
    assert result.eq_duals[0] == pytest.approx(-1.0, abs=1e-6)
    assert equality_dual_sign("CLARABEL") in (-1.0, 1.0)


def test_lower_bound_dual():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", lb=1.0)
    builder.add_linear(x, 1.0)

    result = CvxpySolver().solve(builder.build())

    assert result.objective == pytest.approx(1.0, abs=1e-7)
    assert result.lb_duals[x] == pytest.approx(1.0, abs=1e-6)
    assert result.ub_duals[x] == 0.0


def test_inequality_dual():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", lb=-INF)
    builder.add_le({x: -1.0}, -2.0, RowTag("floor", (0,)))
    builder.add_linear(x, 3.0)

    result = CvxpySolver().solve(builder.build())

    assert result.x[x] == pytest.approx(2.0, abs=1e-7)
    assert result.ineq_duals[0] == pytest.approx(3.0, abs=1e-6)


def test_rotated_cone():
    builder = ProgramBuilder()
    l_var = builder.add_variable("l", (0,), "d")
    v_var = builder.add_variable("v", (0,), "d", lb=1.0, ub=1.0)
    p_var = builder.add_variable("p", (0,), "d", lb=0.6, ub=0.6)
    q_var = builder.add_variable("q", (0,), "d", lb=0.8, ub=0.8)
    builder.add_cone(l_var, v_var, p_var, q_var, RowTag("branch_cone", (0,), "d"))
    builder.add_linear(l_var, 1.0)

    result = CvxpySolver().solve(builder.build())

    assert result.ok
    assert result.x[l_var] == pytest.approx(1.0, abs=1e-6)


def test_quadratic_objective():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", lb=-INF)
    builder.add_quadratic(x, 2.0)
    builder.add_linear(x, -4.0)

    result = CvxpySolver().solve(builder.build())

    # min x^2 - 4x
    assert result.x[x] == pytest.approx(2.0, abs=1e-6)
    assert result.objective == pytest.approx(-4.0, abs=1e-6)


def test_bound_overrides_and_status():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", ub=10.0)
    builder.add_linear(x, -1.0)
    prog = builder.build()
    solver = CvxpySolver()

    assert solver.solve(prog).x[x] == pytest.approx(10.0, abs=1e-6)
    assert solver.solve(prog, ub=np.array([4.0])).x[x] == pytest.approx(4.0, abs=1e-6)

    crossed = solver.solve(prog, lb=np.array([5.0]), ub=np.array([4.0]))
    assert crossed.status == SolveStatus.INFEASIBLE
    assert not crossed.ok


def test_infeasible_rows():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", ub=1.0)
    builder.add_eq({x: 1.0}, 2.0, RowTag("fix", (0,)))

    assert CvxpySolver().solve(builder.build()).status == SolveStatus.INFEASIBLE


def test_clone_keeps_settings():
    solver = CvxpySolver(options={"max_iter": 50})
    clone = solver.clone()

    assert clone.solver == solver.solver
    assert clone.solver_options["max_iter"] == 50
    assert clone is not solver
