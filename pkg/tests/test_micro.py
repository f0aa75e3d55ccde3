import pytest

from dsoled.const import PK_BG, PK_SGC, PK_SGE
from dsoled.micro import (
    micro_adn,
    micro_scenario,
    micro_suite,
    random_exchange_fixing,
    random_transmission,
)
from dsoled.network import is_radial, validate_scenario


def test_random_transmission_shape():
    tn, adns, cfg = random_transmission(5, n_buses=9, horizon=4, n_boundary=2)

    assert adns == []
    assert tn.boundary_bus_ids == (8, 9)
    assert tn.reference_bus_ids == (1,)
    assert cfg.horizon == 4
    for bus_id in tn.boundary_bus_ids:
        bus = tn.bus(bus_id)
        assert not bus.has_generation
        assert sum(bus.demand) == 0.0

    # every interior bus can serve its own demand
    for bus_id in tn.interior_bus_ids:
        bus = tn.bus(bus_id)
        assert min(bus.pg_max) > max(bus.demand)


def test_random_transmission_needs_interior():
    with pytest.raises(AssertionError):
        random_transmission(0, n_buses=3, n_boundary=2)


def test_seeded():
    assert random_transmission(7) == random_transmission(7)
    assert micro_scenario(4) == micro_scenario(4)


def test_exchange_fixing_is_balanced():
    scenario = random_transmission(2, n_buses=8, horizon=3, n_boundary=2)
    fixing = random_exchange_fixing(scenario, 2)

    for bus_id in scenario.tn.boundary_bus_ids:
        bg, sgc, sge = fixing[(PK_BG, bus_id)], fixing[(PK_SGC, bus_id)], fixing[(PK_SGE, bus_id)]
        assert len(bg) == len(sgc) == len(sge) == 3
        for t in range(3):
            assert min(bg[t], sgc[t], sge[t]) >= 0.0
            # never buying and selling at once
            assert bg[t] == 0.0 or sgc[t] + sge[t] == 0.0


def test_micro_adn_layout():
    dn = micro_adn(1, adn_id=6, horizon=2, n_buses=4)

    assert dn.id == 6
    assert dn.agent_bus_ids == (2, 3, 4)
    assert dn.boundary_bus_ids == (1,)
    assert dn.bus(2).battery is not None
    assert dn.bus(4).pv_capacity_ratio > 0
    assert dn.bus(3).pv_capacity_ratio == 0
    assert dn.k_bgc == (pytest.approx(1.5 * dn.peak_load()),)
    assert dn.bus(2).battery.soc_initial == pytest.approx(0.1 * dn.bus(2).battery.capacity)
    assert is_radial(dn)


def test_micro_adn_size_limits():
    with pytest.raises(AssertionError):
        micro_adn(0, 1, 1, n_buses=5)


def test_micro_scenarios_validate():
    for scenario in micro_suite(count=5, seed=3):
        assert validate_scenario(scenario.tn, scenario.adns, scenario.cfg).ok
        assert [dn.id for dn in scenario.adns] == list(scenario.tn.boundary_bus_ids)


def test_micro_without_battery():
    _tn, adns, _cfg = micro_scenario(0, battery=False)

    assert all(bus.battery is None for bus in adns[0].buses)
