import io
import json

import numpy as np
import pytest

from dsoled.bnb import (
    BnbNode,
    BnbOptions,
    BnbStatus,
    Engine,
    LimitReached,
    TooManyBinaries,
    brute_force_enumerate,
    most_fractional,
    preprocess,
    solve_bnb,
    solve_model,
    solve_native,
)
from dsoled.config import ScenarioConfig
from dsoled.conic import mixed_integer_solver
from dsoled.distribution import build_adn_program
from dsoled.micro import micro_adn
from dsoled.program import ProgramBuilder, RowTag
from dsoled.transmission import Infeasible, NotSolved

_EXACT = BnbOptions(gap_tol=1e-9)


def _switch(x_lb=0.0):
    """Either x1 or x2 may be positive, b picks which; the relaxation splits them"""
    builder = ProgramBuilder()
    x1 = builder.add_variable("x", (1,), "t", lb=x_lb, ub=1.0)
    x2 = builder.add_variable("x", (2,), "t", lb=x_lb, ub=1.0)
    b = builder.add_variable("b", (0,), "t", ub=1.0, binary=True)
    builder.add_le({x1: 1.0, b: -1.0}, 0.0, RowTag("gate", (1,), "t"))
    builder.add_le({x2: 1.0, b: 1.0}, 1.0, RowTag("gate", (2,), "t"))
    builder.add_quadratic(x1, 2.0)
    builder.add_linear(x1, -2.0)
    builder.add_quadratic(x2, 1.0)
    builder.add_linear(x2, -1.0)
    return builder.build()


def test_branches_to_optimum():
    prog = _switch()
    report = solve_bnb(prog, opts=_EXACT)

    assert report.status == BnbStatus.OPTIMAL
    assert report.objective == pytest.approx(-1.0, abs=1e-6)
    assert report.x[prog.var("t.b[0]")] == 1.0
    assert report.nodes >= 2
    assert report.gap <= 1e-9
    assert report.free_binaries == 1


def test_brute_force_agrees():
    prog = _switch()
    best, x = brute_force_enumerate(prog)

    assert best == pytest.approx(-1.0, abs=1e-6)
    assert x[prog.var("t.x[1]")] == pytest.approx(1.0, abs=1e-5)


def test_brute_force_cap():
    with pytest.raises(TooManyBinaries):
        brute_force_enumerate(_switch(), cap=0)


def test_node_limit():
    with pytest.raises(LimitReached) as info:
        solve_bnb(_switch(), opts=BnbOptions(gap_tol=1e-9, node_limit=1))

    assert info.value.report.status == BnbStatus.NODE_LIMIT
    assert not info.value.report.has_incumbent


def test_infeasible_by_propagation():
    # both gates need b = 1 and b = 0
    prog = _switch(x_lb=0.5)

    assert preprocess(prog).infeasible
    with pytest.raises(Infeasible):
        solve_bnb(prog)

    with pytest.raises(Infeasible):
        brute_force_enumerate(prog)


def test_preprocess_fixes_forced_binaries():
    builder = ProgramBuilder()
    x = builder.add_variable("x", (0,), "t", lb=0.3, ub=1.0)
    b = builder.add_variable("b", (0,), "t", ub=1.0, binary=True)
    builder.add_le({x: 1.0, b: -1.0}, 0.0, RowTag("gate", (0,), "t"))
    pre = preprocess(builder.build())

    assert pre.lb[b] == 1.0
    assert pre.free_binaries.size == 0


def test_most_fractional_prefers_half_and_low_ids():
    builder = ProgramBuilder()
    for k in range(3):
        builder.add_variable("b", (k,), "t", ub=1.0, binary=True)

    prog = builder.build()
    node = BnbNode(0, None, 0, -np.inf, prog.lb.copy(), prog.ub.copy())

    assert most_fractional(prog, np.array([0.1, 0.5, 0.9]), node) == 1
    assert most_fractional(prog, np.array([0.4, 0.6, 0.0]), node) == 0

    node.ub[0] = 0.0
    assert most_fractional(prog, np.array([0.4, 0.6, 0.0]), node) == 1


def test_report_log():
    report = solve_bnb(_switch(), opts=_EXACT)
    out = io.StringIO()
    report.write_log(out)
    entries = [json.loads(line) for line in out.getvalue().splitlines()]

    assert len(entries) == len(report.log) >= 2
    assert entries[0]["node"] == 0
    assert entries[0]["status"] == "branch"
    assert {"bound", "depth", "fixing", "parent"} <= set(entries[0])
    assert report.to_dict()["status"] == "optimal"


def test_options_from_dict():
    opts = BnbOptions.from_dict({"gap_tol": 1e-3, "node_limit": 5, "deterministic": False})

    assert opts.gap_tol == 1e-3
    assert opts.node_limit == 5
    assert opts.time_limit is None
    assert not opts.deterministic


def test_solve_model_engines():
    report = solve_model(_switch(), engine="bnb", opts=_EXACT)

    assert report.engine == Engine.BNB.value
    assert report.objective == pytest.approx(-1.0, abs=1e-6)


def test_native_needs_backend():
    if mixed_integer_solver() is not None:
        report = solve_native(_switch())
        assert report.objective == pytest.approx(-1.0, abs=1e-5)
    else:
        with pytest.raises(NotSolved):
            solve_native(_switch())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adn_matches_enumeration(seed):
    cfg = ScenarioConfig.from_dict(
        {"horizon": 2, "price_bgc": 20, "price_bge": 40, "price_sg": 15, "pv_availability_dn": [0.3, 0.9]}
    )
    adn = build_adn_program(micro_adn(seed, 1, 2, n_buses=3), cfg)
    report = solve_bnb(adn.prog, opts=_EXACT)
    best, _x = brute_force_enumerate(adn.prog)

    assert report.objective == pytest.approx(best, abs=1e-6 * max(1.0, abs(best)))


def test_parallel_nodes_agree():
    opts = BnbOptions(gap_tol=1e-9, deterministic=False, workers=2)
    report = solve_bnb(_switch(), opts=opts)

    assert report.objective == pytest.approx(-1.0, abs=1e-6)
