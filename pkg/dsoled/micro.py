"""Seeded random and micro instances for the verification suite"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ScenarioConfig
from .const import PK_BG, PK_SGC, PK_SGE
from .network import (
    BessSpec,
    DistributionNetwork,
    DnBus,
    DnLine,
    Scenario,
    TnBus,
    TnLine,
    TransmissionNetwork,
    validate_scenario,
)

_LOGGER = logging.getLogger(__name__)

PRICE_BGC = 20.0
PRICE_BGE = 40.0
PRICE_SG = 15.0

# Largest per-bus PV output, kept below the smallest bus demand
_MAX_PV_AVAILABILITY = 5.0
_MIN_DEMAND = 5.0

ExchangeFixing = Dict[Tuple[str, int], List[float]]


def _tree_edges(rng: np.random.Generator, n: int) -> List[Tuple[int, int]]:
    """Random spanning tree over buses 1..n"""
    return [(int(rng.integers(1, i)), i) for i in range(2, n + 1)]


def random_transmission(
    seed: int,
    n_buses: int = 5,
    horizon: int = 1,
    n_boundary: int = 1,
    extra_lines: Optional[int] = None,
) -> Scenario:
    """TN-only scenario in which every interior bus can serve its own demand.

    Boundary buses are leaves numbered after the interior buses; bus 1 is the reference.
    """
    assert n_buses - n_boundary >= 2, "Need at least two interior buses"
    assert n_boundary >= 1, "Need a boundary bus"

    rng = np.random.default_rng(seed)
    n_interior = n_buses - n_boundary
    edges = _tree_edges(rng, n_interior)
    if extra_lines is None:
        extra_lines = n_interior // 3

    known = set(edges) | {(b, a) for a, b in edges}
    for _ in range(extra_lines):
        a, b = (int(v) for v in rng.choice(np.arange(1, n_interior + 1), size=2, replace=False))
        if (a, b) not in known:
            edges.append((a, b))
            known |= {(a, b), (b, a)}

    boundary = list(range(n_interior + 1, n_buses + 1))
    neighbor = {b: int(rng.integers(1, n_interior + 1)) for b in boundary}
    edges += [(neighbor[b], b) for b in boundary]

    lines = tuple(
        TnLine(
            from_bus=a,
            to_bus=b,
            reactance=float(rng.uniform(0.05, 0.3)),
            flow_limit=float(rng.uniform(_MIN_DEMAND, 40.0)),
        )
        for a, b in edges
    )

    has_pv = rng.random(n_interior) < 0.3
    buses = []
    for bus_id in range(1, n_interior + 1):
        base = rng.uniform(_MIN_DEMAND, 30.0)
        demand = tuple(float(base * f) for f in rng.uniform(0.8, 1.0, size=horizon))
        pmax = float(max(demand) * rng.uniform(1.5, 3.0) + 20.0)
        buses.append(
            TnBus(
                id=bus_id,
                demand=demand,
                gen_cost=(float(rng.uniform(0.001, 0.02)), float(rng.uniform(1.0, 10.0)), 0.0),
                pg_max=tuple(pmax for _ in range(horizon)),
                pv_marginal_cost=float(rng.uniform(0.0, 1.0)) if has_pv[bus_id - 1] else 0.0,
                pv_capacity_ratio=float(rng.uniform(0.2, 1.0)) if has_pv[bus_id - 1] else 0.0,
            )
        )

    for bus_id in boundary:
        buses.append(
            TnBus(
                id=bus_id,
                demand=tuple(0.0 for _ in range(horizon)),
                kt_bg_limit=float(_boundary_line(lines, bus_id).flow_limit),
            )
        )

    tn = TransmissionNetwork(
        buses=tuple(buses),
        lines=lines,
        boundary_bus_ids=tuple(boundary),
        reference_bus_ids=(1,),
    )
    cfg = ScenarioConfig.from_dict(
        {
            "horizon": horizon,
            "step_hours": 1.0,
            "price_bgc": PRICE_BGC,
            "price_bge": PRICE_BGE,
            "price_sg": PRICE_SG,
            "pv_availability_tn": [
                float(v) for v in rng.uniform(0.0, _MAX_PV_AVAILABILITY, size=horizon)
            ],
            "pv_availability_dn": [float(v) for v in rng.uniform(0.2, 1.0, size=horizon)],
            "seed": seed,
        }
    )

    return Scenario(tn, (), cfg)


def _boundary_line(lines: Sequence[TnLine], bus_id: int) -> TnLine:
    for line in lines:
        if bus_id in (line.from_bus, line.to_bus):
            return line

    raise ValueError(f"Unexpected isolated bus: {bus_id}")


def random_exchange_fixing(scenario: Scenario, seed: int) -> ExchangeFixing:
    """Boundary exchanges every random TN instance can accommodate"""
    tn, cfg = scenario.tn, scenario.cfg
    rng = np.random.default_rng(seed)
    pv_pool = [
        sum(cfg.pv_availability_tn[t] * bus.pv_capacity_ratio for bus in tn.buses)
        for t in cfg.periods
    ]

    fixing: ExchangeFixing = {}
    n_boundary = len(tn.boundary_bus_ids)
    for bus_id in tn.boundary_bus_ids:
        line = _boundary_line(tn.lines, bus_id)
        other = line.from_bus if line.to_bus == bus_id else line.to_bus
        room = min(10.0, 0.5 * line.flow_limit, min(tn.bus(other).demand))
        bg, sgc, sge = [], [], []
        for t in cfg.periods:
            net = float(rng.uniform(-room, room))
            cheap = min(max(net, 0.0), 0.5 * pv_pool[t] / n_boundary)
            bg.append(max(-net, 0.0))
            sgc.append(cheap)
            sge.append(max(net, 0.0) - cheap)

        fixing[(PK_BG, bus_id)] = bg
        fixing[(PK_SGC, bus_id)] = sgc
        fixing[(PK_SGE, bus_id)] = sge

    return fixing


def micro_adn(
    seed: int,
    adn_id: int,
    horizon: int,
    n_buses: int = 3,
    battery: bool = True,
) -> DistributionNetwork:
    """Path feeder rooted at bus 1, PV at the last agent and a battery at the first"""
    assert 2 <= n_buses <= 4, "Micro feeders have 2 to 4 buses"

    rng = np.random.default_rng(seed)
    agents = list(range(2, n_buses + 1))
    q_limit = float(rng.uniform(1.0, 10.0))
    buses = [
        DnBus(
            id=1,
            demand=tuple(0.0 for _ in range(horizon)),
            reactive_demand=tuple(0.0 for _ in range(horizon)),
            qg_min=-q_limit,
            qg_max=q_limit,
            v_min=1.0,
            v_max=1.0,
        )
    ]

    pv_bus = agents[-1]
    battery_bus = agents[0]
    for bus_id in agents:
        peak = rng.uniform(0.1, 0.6)
        demand = tuple(float(peak * f) for f in rng.uniform(0.5, 1.0, size=horizon))
        bess = None
        if battery and bus_id == battery_bus:
            capacity = float(rng.uniform(0.5, 2.0))
            bess = BessSpec(
                installed=True,
                capacity=capacity,
                rated_power=0.5 * capacity,
                soc_min=0.1,
                soc_max=0.9,
                eff_charge=0.95,
                eff_discharge=0.95,
                soc_initial=0.1 * capacity,
            )

        buses.append(
            DnBus(
                id=bus_id,
                demand=demand,
                reactive_demand=tuple(0.3 * d for d in demand),
                pv_capacity_ratio=float(rng.uniform(0.3, 1.0)) if bus_id == pv_bus else 0.0,
                battery=bess,
            )
        )

    lines = tuple(
        DnLine(
            from_bus=bus_id - 1,
            to_bus=bus_id,
            resistance=float(rng.uniform(0.005, 0.02)),
            reactance=float(rng.uniform(0.005, 0.02)),
            current_sq_limit=1.0,
        )
        for bus_id in agents
    )

    dn = DistributionNetwork(
        id=adn_id,
        buses=tuple(buses),
        lines=lines,
        agent_bus_ids=tuple(agents),
        boundary_bus_ids=(1,),
        k_sg=(0.0,),
        k_bgc=(0.0,),
        k_bge=(0.0,),
    )
    peak = dn.peak_load()
    pv_cap = sum(bus.pv_capacity_ratio for bus in buses)
    return replace(dn, k_sg=(float(pv_cap),), k_bgc=(1.5 * peak,), k_bge=(1.5 * peak,))


def micro_scenario(
    seed: int,
    n_tn_buses: int = 3,
    n_adn_buses: int = 3,
    horizon: int = 1,
    n_adns: int = 1,
    battery: bool = True,
) -> Scenario:
    """Bilevel micro instance: one ADN per TN boundary bus"""
    base = random_transmission(
        seed, n_buses=n_tn_buses, horizon=horizon, n_boundary=n_adns, extra_lines=0
    )
    adns = tuple(
        micro_adn(seed * 101 + k, bus_id, horizon, n_buses=n_adn_buses, battery=battery)
        for k, bus_id in enumerate(base.tn.boundary_bus_ids)
    )
    scenario = Scenario(base.tn, adns, base.cfg)
    report = validate_scenario(scenario.tn, scenario.adns, scenario.cfg)
    assert report.ok, report.messages()

    return scenario


def micro_suite(count: int = 10, seed: int = 0) -> List[Scenario]:
    """Micro instances of varying shape sharing one base seed"""
    shapes = [(3, 3, 1), (3, 2, 2), (4, 3, 1), (3, 4, 1), (4, 2, 2)]
    suite = []
    for k in range(count):
        n_tn, n_adn, horizon = shapes[k % len(shapes)]
        suite.append(micro_scenario(seed + k, n_tn, n_adn, horizon))

    _LOGGER.debug("Built %s micro instance(s)", len(suite))
    return suite


def random_transmission_suite(count: int = 20, seed: int = 0) -> List[Tuple[Scenario, ExchangeFixing]]:
    """TN instances of 5 to 30 buses over 1, 4 or 24 periods, with feasible fixings"""
    rng = np.random.default_rng(seed)
    horizons = (1, 4, 24)
    suite = []
    for k in range(count):
        n_buses = int(rng.integers(5, 31))
        n_boundary = int(rng.integers(1, 3))
        scenario = random_transmission(
            seed + k, n_buses=n_buses, horizon=horizons[k % 3], n_boundary=n_boundary
        )
        suite.append((scenario, random_exchange_fixing(scenario, seed + k)))

    return suite
