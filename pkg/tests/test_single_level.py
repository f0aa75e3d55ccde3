from dataclasses import replace

import numpy as np
import pytest

from dsoled.const import (
    ALPHA,
    DN_W,
    DN_Y,
    FAMILY_COUPLING,
    PK_BG,
    PK_SGC,
    PK_SGE,
    SINGLE_LEVEL_FAMILIES,
)
from dsoled.distribution import build_adn_program
from dsoled.kkt import derive_kkt
from dsoled.micro import random_transmission_suite
from dsoled.program import RowTag
from dsoled.single_level import (
    CouplingError,
    active_set_fixing,
    assemble_single_level,
    check_kkt_soundness,
    constraint_family,
    fixed_exchange_program,
    solve_active_set,
)
from dsoled.transmission import build_tn_program, solve_tn_direct


def _oracle(tn_prog, cfg):
    model = assemble_single_level(tn_prog, [], derive_kkt(tn_prog), cfg, couple=False)
    direct = solve_tn_direct(tn_prog)
    return model, direct, solve_active_set(model, direct)


@pytest.mark.parametrize(
    "tag, family",
    [
        (RowTag("flow_ub", (1, 2, 0), "tn"), "tso_primal"),
        (RowTag("stationarity", ("pg", 1, 0), "kkt"), "tso_stationarity"),
        (RowTag("complementarity_slack", ("x",), "kkt"), "tso_big_m"),
        (RowTag("complementarity_dual", ("x",), "kkt"), "tso_big_m"),
        (RowTag("coupling", ("pk_sg", 3, 0), "dso"), "coupling"),
        (RowTag("branch_cone", (1, 2, 0), "adn3"), "dso_network"),
        (RowTag("pv_cap", (3, 0), "adn3"), "dso_pv"),
        (RowTag("soc_recursion", (2, 1), "adn3"), "dso_battery"),
        (RowTag("local_market", (0,), "adn3"), "dso_p2p"),
    ],
)
def test_constraint_family(tag, family):
    assert constraint_family(tag) == family


def test_unknown_family():
    with pytest.raises(ValueError):
        constraint_family(RowTag("mystery", (0,), "adn3"))


def test_fixed_exchange_matches_direct(three_bus):
    tn, _adns, cfg = three_bus
    fixing = {(PK_BG, 3): [0.0], (PK_SGC, 3): [0.0], (PK_SGE, 3): [10.0]}
    tn_prog = fixed_exchange_program(build_tn_program(tn, cfg), fixing)
    model, direct, sol = _oracle(tn_prog, cfg)

    assert direct.objective == pytest.approx(416.0, abs=1e-5)
    assert sol.tn_cost() == pytest.approx(direct.objective, rel=1e-6)
    assert sol.stationarity_residual() <= 1e-6
    assert sol.complementarity_residual() <= 1e-5
    assert check_kkt_soundness(sol).ok()
    assert sol.exchange_fixing()[(PK_SGE, 3)] == pytest.approx([10.0], abs=1e-6)
    assert set(active_set_fixing(model, direct)) == set(model.alpha_columns.tolist())


def test_random_instances_match_direct():
    for scenario, fixing in random_transmission_suite(count=3, seed=11):
        tn_prog = build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing)
        _model, direct, sol = _oracle(tn_prog, scenario.cfg)

        assert sol.tn_cost() == pytest.approx(direct.objective, rel=1e-6)
        assert not sol.saturation().saturated


def test_active_set_from_interior_point_duals():
    # interior-point slacks on binding rows sit well above 1e-7
    for k, (scenario, fixing) in enumerate(random_transmission_suite(count=20, seed=0)):
        tn_prog = build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing)
        model, direct, sol = _oracle(tn_prog, scenario.cfg)

        assert sol.tn_cost() == pytest.approx(direct.objective, rel=1e-6), k
        alphas = active_set_fixing(model, direct)
        assert set(alphas.values()) <= {0.0, 1.0}


def test_irrelevant_multipliers_fixed(three_bus):
    tn, _adns, cfg = three_bus
    tn_prog = build_tn_program(tn, cfg)
    model = assemble_single_level(tn_prog, [], derive_kkt(tn_prog), cfg, couple=False)
    tags = [str(tag) for tag in model.kkt.pair_tags]
    ub = model.program.ub[model.alpha_columns]

    # cap on purchases from the ADN only enters the exchange rows
    assert ub[tags.index("tn.bg_cap[3,0]")] == 0.0
    assert ub[tags.index("tn.pg_ub[1,0]")] == 1.0


def test_model_size(micro):
    tn, adns, cfg = micro
    tn_prog = build_tn_program(tn, cfg)
    adn_progs = [build_adn_program(dn, cfg) for dn in adns]
    kkt = derive_kkt(tn_prog)
    model = assemble_single_level(tn_prog, adn_progs, kkt, cfg)
    size = model.size()

    assert set(size.by_family) == set(SINGLE_LEVEL_FAMILIES)
    assert sum(size.by_family.values()) == size.constraints
    assert size.by_family[FAMILY_COUPLING] == 3 * len(tn.boundary_bus_ids) * cfg.horizon
    assert size.binaries_by_kind[ALPHA] == kkt.n_pairs
    assert size.binaries_by_kind[DN_Y] == len(adns[0].agent_bus_ids) * cfg.horizon
    assert size.binaries_by_kind[DN_W] == cfg.horizon
    assert size.binaries == sum(size.binaries_by_kind.values())
    assert size.to_dict()["variables"] == size.variables


def test_unattached_adn_rejected(micro):
    tn, adns, cfg = micro
    tn_prog = build_tn_program(tn, cfg)
    stray = build_adn_program(replace(adns[0], id=1), cfg)

    with pytest.raises(CouplingError):
        assemble_single_level(tn_prog, [stray], derive_kkt(tn_prog), cfg)


def test_fixed_exchange_program_bounds(three_bus):
    tn, _adns, cfg = three_bus
    tn_prog = build_tn_program(tn, cfg)
    fixed = fixed_exchange_program(tn_prog, {(PK_SGE, 3): [7.0]})
    column = tn_prog.lookup(PK_SGE, (3, 0), "tn")

    assert fixed.lb[column] == fixed.ub[column] == 7.0
    assert np.isinf(tn_prog.ub[column])
