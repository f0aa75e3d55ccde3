from dataclasses import replace

import numpy as np
import pytest

from dsoled.const import FLOW, PG, PK_BG, PK_SGC, PK_SGE
from dsoled.micro import random_exchange_fixing, random_transmission, random_transmission_suite
from dsoled.transmission import (
    AggregatedNode,
    Infeasible,
    NotSolved,
    build_tn_program,
    marginal_cost_at,
    solve_tn_direct,
    thermal_marginal_costs,
)


def _fixing(sge=0.0, bus=3):
    return {(PK_BG, bus): [0.0], (PK_SGC, bus): [0.0], (PK_SGE, bus): [sge]}


def test_dispatch_without_exchange(three_bus):
    tn, _adns, cfg = three_bus
    sol = solve_tn_direct(build_tn_program(tn, cfg, boundary_fixing=_fixing()))

    assert sol.value(PG, (1, 0)) == pytest.approx(30.0, abs=1e-6)
    # 0.01 * 30^2 + 10 * 30
    assert sol.objective == pytest.approx(309.0, abs=1e-5)
    assert sol.generation_cost() == pytest.approx(309.0, abs=1e-5)
    for bus in (1, 2, 3):
        assert marginal_cost_at(sol, bus, 0) == pytest.approx(10.6, abs=1e-5)

    assert thermal_marginal_costs(tn, sol) == pytest.approx([10.6], abs=1e-5)


def test_sale_to_boundary_bus(three_bus):
    tn, _adns, cfg = three_bus
    sol = solve_tn_direct(build_tn_program(tn, cfg, boundary_fixing=_fixing(sge=10.0)))

    assert sol.value(PG, (1, 0)) == pytest.approx(40.0, abs=1e-6)
    assert sol.objective == pytest.approx(416.0, abs=1e-5)
    np.testing.assert_allclose(sol.flow_matrix(tn), [[40.0], [10.0]], atol=1e-6)
    assert sol.value(FLOW, (2, 3, 0)) == pytest.approx(10.0, abs=1e-6)


def test_step_length_scales_costs(three_bus):
    tn, _adns, cfg = three_bus
    half = replace(cfg, step_hours=0.5)
    sol = solve_tn_direct(build_tn_program(tn, half, boundary_fixing=_fixing()))

    assert sol.objective == pytest.approx(154.5, abs=1e-5)
    assert marginal_cost_at(sol, 2, 0) == pytest.approx(10.6, abs=1e-5)


def test_line_limit_makes_fixing_infeasible(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg, boundary_fixing=_fixing(sge=60.0))

    with pytest.raises(Infeasible) as info:
        solve_tn_direct(prog)

    report = info.value.report
    assert report.total_violation > 1e-6
    assert report.violated_rows


def test_aggregated_node(three_bus):
    tn, _adns, cfg = three_bus
    aggregated = {3: AggregatedNode(3, (5.0,), (2.0,))}
    sol = solve_tn_direct(build_tn_program(tn, cfg, aggregated=aggregated))

    assert sol.value(PG, (1, 0)) == pytest.approx(33.0, abs=1e-6)
    assert sol.objective == pytest.approx(340.89, abs=1e-5)
    assert marginal_cost_at(sol, 3, 0) == pytest.approx(10.66, abs=1e-5)


def test_boundary_bus_with_demand_rejected(three_bus):
    tn, _adns, cfg = three_bus
    buses = list(tn.buses)
    buses[2] = replace(buses[2], demand=(1.0,))

    with pytest.raises(ValueError):
        build_tn_program(replace(tn, buses=tuple(buses)), cfg)


def test_program_layout(three_bus):
    tn, _adns, cfg = three_bus
    prog = build_tn_program(tn, cfg)

    assert len(prog.indices_of(PG)) == 1
    assert len(prog.indices_of(FLOW)) == 2
    assert prog.meta == {"step_hours": 1.0, "horizon": 1}
    counts = prog.row_counts()
    assert counts["balance_interior"] == 2
    assert counts["balance_boundary"] == 1
    assert counts["flow_def"] == 2
    assert counts["ref_angle"] == 1


def test_marginal_cost_needs_solution():
    with pytest.raises(NotSolved):
        marginal_cost_at(None, 1, 0)


def test_duals_satisfy_stationarity():
    for scenario, fixing in random_transmission_suite(count=3, seed=4):
        sol = solve_tn_direct(build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing))

        assert sol.primal_residual <= 1e-6
        assert sol.stationarity_residual <= 1e-5
        assert sol.complementarity_residual <= 1e-4


def test_random_fixings_are_feasible():
    scenario = random_transmission(7, n_buses=8, horizon=4, n_boundary=2)
    fixing = random_exchange_fixing(scenario, 7)
    sol = solve_tn_direct(build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing))

    assert np.isfinite(sol.objective)
    assert set(fixing) == {
        (kind, bus) for bus in scenario.tn.boundary_bus_ids for kind in (PK_BG, PK_SGC, PK_SGE)
    }


@pytest.mark.slow
def test_random_suite_solves():
    for scenario, fixing in random_transmission_suite(count=20, seed=0):
        sol = solve_tn_direct(build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing))
        assert sol.primal_residual <= 1e-6
