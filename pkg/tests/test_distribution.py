from dataclasses import replace

import numpy as np
import pytest

from dsoled.bnb import BnbOptions, solve_bnb
from dsoled.config import ScenarioConfig
from dsoled.const import DN_CH, DN_DP_PLUS, DN_PK_BGC, DN_SOC, DN_W, DN_Y, EXCHANGE_KINDS
from dsoled.distribution import (
    AdnSolution,
    NonRadialError,
    battery_recursion_check,
    build_adn_program,
    cone_tightness,
    conservation_residual,
    derive_p2p_big_m,
    p2p_clearing_check,
)
from dsoled.micro import micro_adn
from dsoled.network import DnLine
from dsoled.transmission import Infeasible

_EXACT = BnbOptions(gap_tol=1e-9)


def _resting(adn):
    """All zeros except batteries parked at their initial charge"""
    x = np.zeros(adn.prog.n_vars)
    for bus_id in adn.dn.agent_bus_ids:
        bess = adn.dn.bus(bus_id).battery
        if bess is not None:
            x[adn.var(DN_SOC, (bus_id, 0))] = bess.soc_initial

    return x


def test_layout(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg)
    prog = adn.prog

    assert adn.owner == "adn3"
    assert len(prog.binary_indices) == 3
    assert adn.var(DN_W, (2, 0)) is not None
    assert adn.var(DN_W, (3, 0)) is None
    assert adn.var(DN_Y, (3, 0)) is not None
    assert len(prog.cones) == len(adns[0].lines)
    assert prog.row_counts()["local_market"] == cfg.horizon
    assert {term.kind for term in adn.objective_terms.terms} == set(EXCHANGE_KINDS)


def test_p2p_big_m(micro):
    _tn, adns, cfg = micro
    dn = adns[0]
    pv = sum(bus.pv_capacity_ratio for bus in dn.buses) * max(cfg.pv_availability_dn)
    expected = 2.0 * (dn.peak_load() + pv + dn.rated_bess_power())

    assert derive_p2p_big_m(dn, cfg) == pytest.approx(expected)
    assert derive_p2p_big_m(dn, replace(cfg, big_m_p2p=7.5)) == 7.5


def test_non_radial_rejected():
    dn = micro_adn(3, 1, 1, n_buses=4)
    looped = replace(dn, lines=dn.lines + (DnLine(1, 4, 0.01, 0.01, 1.0),))
    cfg = ScenarioConfig.from_dict({"horizon": 1, "price_bgc": 20, "price_bge": 40, "price_sg": 15})

    with pytest.raises(NonRadialError):
        build_adn_program(looped, cfg)


def test_checks_on_resting_point(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg)
    x = _resting(adn)
    sol = AdnSolution(adn, x)

    assert battery_recursion_check(sol, adn.dn, cfg) == 0.0
    assert p2p_clearing_check(sol).ok()
    assert cone_tightness(sol).tight
    assert conservation_residual(sol) == pytest.approx(float(adn.dn.total_demand()[0]))

    x[adn.var(DN_SOC, (2, 0))] += 0.1
    assert battery_recursion_check(AdnSolution(adn, x), adn.dn, cfg) == pytest.approx(0.1)


def test_exclusivity_violation(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg)
    x = _resting(adn)
    x[adn.var(DN_DP_PLUS, (2, 0))] = 0.2

    report = p2p_clearing_check(AdnSolution(adn, x))
    assert report.exclusivity_violations == ((2, 0),)
    assert not report.ok()


def test_exchange_accounting(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg)
    x = _resting(adn)
    x[adn.var(DN_PK_BGC, (1, 0))] = 2.0
    sol = AdnSolution(adn, x)

    assert sol.exchange_cost() == pytest.approx(2.0 * cfg.price_bgc[0] * cfg.step_hours)
    assert sol.exchanges()[DN_PK_BGC].tolist() == [2.0]
    assert sol.soc_total()[0] == pytest.approx(adns[0].bus(2).battery.soc_initial)
    frame = sol.to_frame()
    assert list(frame.columns) == ["bus", "t", "variable", "value"]
    assert len(frame) == adn.prog.n_vars
    assert set(frame[frame.variable == "p"].bus) == {"1-2", "2-3"}


def test_optimal_schedule_is_consistent(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg)
    report = solve_bnb(adn.prog, opts=_EXACT)
    sol = AdnSolution(adn, report.x)

    assert battery_recursion_check(sol, adn.dn, cfg) <= 1e-6
    assert conservation_residual(sol) <= 1e-5
    clearing = p2p_clearing_check(sol, tol=1e-4)
    assert clearing.max_residual() <= 1e-5
    assert not clearing.exclusivity_violations
    assert sol.exchange_cost() == pytest.approx(report.objective, abs=1e-6)


def test_fixed_exchange_beyond_cap_is_infeasible(micro):
    _tn, adns, cfg = micro
    adn = build_adn_program(adns[0], cfg, fixed_exchanges={(DN_PK_BGC, 1): [100.0]})

    with pytest.raises(Infeasible):
        solve_bnb(adn.prog, opts=_EXACT)


def test_elastic_fallback_absorbs_fixing(micro):
    _tn, adns, cfg = micro
    dn = adns[0]
    adn = build_adn_program(dn, cfg, fixed_exchanges={(DN_PK_BGC, 1): [100.0]}, elastic=True)
    assert adn.elastic

    report = solve_bnb(adn.prog, opts=_EXACT)
    sol = AdnSolution(adn, report.x)
    assert sol.elastic_slack() >= 100.0 - dn.k_bgc[0] - 1e-6
    assert sol.value(DN_PK_BGC, 1, 0) <= dn.k_bgc[0] + 1e-6


def test_idle_battery_not_installed(micro):
    _tn, adns, cfg = micro
    dn = adns[0]
    bess = replace(dn.bus(2).battery, installed=False)
    buses = tuple(replace(bus, battery=bess) if bus.id == 2 else bus for bus in dn.buses)
    adn = build_adn_program(replace(dn, buses=buses), cfg)

    report = solve_bnb(adn.prog, opts=_EXACT)
    assert AdnSolution(adn, report.x).value(DN_CH, 2, 0) <= 1e-6
