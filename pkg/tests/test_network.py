from dataclasses import replace

import numpy as np
import pytest

from dsoled.micro import micro_adn, micro_scenario
from dsoled.network import DnLine, is_radial, validate_scenario


def _messages(scenario):
    return " | ".join(validate_scenario(*scenario).messages())


def test_micro_scenario_is_valid(micro):
    report = validate_scenario(*micro)

    assert report.ok, report.messages()


def test_three_bus_is_valid(three_bus):
    assert validate_scenario(*three_bus).ok


def test_price_ordering(three_bus):
    cfg = three_bus.cfg.with_prices(price_bgc=(50.0,))
    scenario = replace(three_bus, cfg=cfg)

    assert "price ordering sg <= bgc <= bge violated" in _messages(scenario)


def test_boundary_bus_with_demand(three_bus):
    buses = list(three_bus.tn.buses)
    buses[2] = replace(buses[2], demand=(1.0,))
    scenario = replace(three_bus, tn=replace(three_bus.tn, buses=tuple(buses)))

    assert "boundary bus hosts generation or demand" in _messages(scenario)


def test_disconnected_network(three_bus):
    tn = replace(three_bus.tn, lines=three_bus.tn.lines[:1])

    assert "network is not connected" in _messages(replace(three_bus, tn=tn))


def test_negative_demand(three_bus):
    buses = list(three_bus.tn.buses)
    buses[1] = replace(buses[1], demand=(-1.0,))
    scenario = replace(three_bus, tn=replace(three_bus.tn, buses=tuple(buses)))

    assert "negative value" in _messages(scenario)


def test_unattached_adn(three_bus):
    dn = micro_adn(0, adn_id=2, horizon=1)
    scenario = replace(three_bus, adns=(dn,))

    assert "unattached ADN at bus 2" in _messages(scenario)


def test_bad_initial_soc(micro):
    dn = micro.adns[0]
    buses = []
    for bus in dn.buses:
        if bus.battery is not None:
            bus = replace(bus, battery=replace(bus.battery, soc_initial=bus.battery.capacity))

        buses.append(bus)

    scenario = replace(micro, adns=(replace(dn, buses=tuple(buses)),))

    assert "soc_initial outside soc bounds" in _messages(scenario)


def test_radial_check():
    dn = micro_adn(3, adn_id=1, horizon=1, n_buses=4)
    assert is_radial(dn)

    # closing the path into a loop
    loop = replace(
        dn,
        lines=dn.lines + (DnLine(1, 4, 0.01, 0.01, 1.0),),
    )
    assert not is_radial(loop)
    assert "non-radial topology" in _messages(
        replace(micro_scenario(3, n_adn_buses=4), adns=(replace(loop, id=3),))
    )


def test_scenario_unpacks_and_looks_up(micro):
    tn, adns, cfg = micro
    adn_id = adns[0].id

    assert micro.adn(adn_id) is adns[0]
    assert cfg.horizon == 1
    with pytest.raises(KeyError):
        micro.adn(-1)

    expected = tn.total_demand() + adns[0].total_demand()
    np.testing.assert_allclose(micro.system_demand(), expected)
