"""Network, device and scenario types with validation"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .config import ScenarioConfig

_LOGGER = logging.getLogger(__name__)

_EPS = 1e-12


@dataclass(frozen=True)
class TnBus:
    id: int

    demand: Tuple[float, ...]
    """PL^T per period, MW"""

    gen_cost: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    """(Ca $/MW^2, Cb $/MW, Cc $)"""

    pg_max: Tuple[float, ...] = ()
    """PG^{T,max} per period, MW (empty means no generator)"""

    pv_marginal_cost: float = 0.0
    pv_capacity_ratio: float = 0.0

    kt_bg_limit: float = 0.0
    """K^{T,bg}, boundary buses only"""

    @property
    def has_generation(self) -> bool:
        return any(p > 0 for p in self.pg_max)

    @property
    def has_pv(self) -> bool:
        return self.pv_capacity_ratio > 0


@dataclass(frozen=True)
class TnLine:
    from_bus: int
    to_bus: int
    reactance: float
    """p.u. on the network base"""

    flow_limit: float
    """MW"""


@dataclass(frozen=True)
class TransmissionNetwork:
    buses: Tuple[TnBus, ...]
    lines: Tuple[TnLine, ...]
    boundary_bus_ids: Tuple[int, ...]
    reference_bus_ids: Tuple[int, ...]
    base_mva: float = 100.0

    @cached_property
    def bus_by_id(self) -> Dict[int, TnBus]:
        return {bus.id: bus for bus in self.buses}

    def bus(self, bus_id: int) -> TnBus:
        return self.bus_by_id[bus_id]

    @property
    def interior_bus_ids(self) -> List[int]:
        boundary = set(self.boundary_bus_ids)
        return [bus.id for bus in self.buses if bus.id not in boundary]

    def total_demand(self) -> np.ndarray:
        return np.sum([bus.demand for bus in self.buses], axis=0)


@dataclass(frozen=True)
class BessSpec:
    installed: bool
    capacity: float
    """gamma^{D,bt}, MWh"""

    rated_power: float
    soc_min: float
    """p.u. of capacity"""

    soc_max: float
    eff_charge: float
    eff_discharge: float
    soc_initial: float
    """MWh"""


@dataclass(frozen=True)
class DnBus:
    id: int
    demand: Tuple[float, ...]
    reactive_demand: Tuple[float, ...]
    qg_min: float = 0.0
    qg_max: float = 0.0
    v_min: float = 0.81
    """Voltage squared, p.u.^2"""

    v_max: float = 1.21
    pv_capacity_ratio: float = 0.0
    battery: Optional[BessSpec] = None


@dataclass(frozen=True)
class DnLine:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    current_sq_limit: float


@dataclass(frozen=True)
class DistributionNetwork:
    id: int
    """TN boundary bus the ADN attaches to"""

    buses: Tuple[DnBus, ...]
    lines: Tuple[DnLine, ...]
    agent_bus_ids: Tuple[int, ...]
    boundary_bus_ids: Tuple[int, ...]

    k_sg: Tuple[float, ...]
    """Sale caps aligned with boundary_bus_ids, MW"""

    k_bgc: Tuple[float, ...]
    k_bge: Tuple[float, ...]
    base_mva: float = 10.0

    @cached_property
    def bus_by_id(self) -> Dict[int, DnBus]:
        return {bus.id: bus for bus in self.buses}

    def bus(self, bus_id: int) -> DnBus:
        return self.bus_by_id[bus_id]

    @property
    def root_bus_id(self) -> int:
        return self.boundary_bus_ids[0]

    def peak_load(self) -> float:
        """Sum of per-bus peak demands"""
        return float(sum(max(bus.demand, default=0.0) for bus in self.buses))

    def total_demand(self) -> np.ndarray:
        return np.sum([bus.demand for bus in self.buses], axis=0)

    def installed_pv(self, pv_reference_mw: float) -> float:
        return float(
            sum(bus.pv_capacity_ratio for bus in self.buses) * pv_reference_mw
        )

    def installed_bess(self) -> float:
        return float(
            sum(
                bus.battery.capacity
                for bus in self.buses
                if bus.battery is not None and bus.battery.installed
            )
        )

    def rated_bess_power(self) -> float:
        return float(
            sum(
                bus.battery.rated_power
                for bus in self.buses
                if bus.battery is not None and bus.battery.installed
            )
        )


@dataclass(frozen=True)
class Scenario:
    tn: TransmissionNetwork
    adns: Tuple[DistributionNetwork, ...]
    cfg: ScenarioConfig

    def __iter__(self) -> Iterator[Any]:
        return iter((self.tn, list(self.adns), self.cfg))

    def adn(self, adn_id: int) -> DistributionNetwork:
        for dn in self.adns:
            if dn.id == adn_id:
                return dn

        raise KeyError(adn_id)

    def system_demand(self) -> np.ndarray:
        demand = np.zeros(self.cfg.horizon)
        demand += self.tn.total_demand()
        for dn in self.adns:
            demand += dn.total_demand()

        return demand


# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> List[str]:
        return [str(v) for v in self.violations]


def _is_connected(node_ids: Sequence[int], edges: Sequence[Tuple[int, int]]) -> bool:
    if len(node_ids) <= 1:
        return True

    position = {node_id: i for i, node_id in enumerate(node_ids)}
    rows = [position[a] for a, _b in edges]
    cols = [position[b] for _a, b in edges]
    graph = coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(node_ids), len(node_ids))
    )
    n_components, _labels = connected_components(graph, directed=False)
    return n_components == 1


def _check_profile(
    violations: List[Violation], path: str, values: Sequence[float], horizon: int
) -> None:
    if len(values) != horizon:
        violations.append(
            Violation(path, f"profile length {len(values)} != horizon {horizon}")
        )
    elif any(v < 0 for v in values):
        violations.append(Violation(path, "negative value"))


def _validate_transmission(
    tn: TransmissionNetwork, horizon: int, violations: List[Violation]
) -> None:
    bus_ids = [bus.id for bus in tn.buses]
    known = set(bus_ids)
    if len(known) != len(bus_ids):
        violations.append(Violation("tn.buses", "duplicate bus id"))

    if not tn.reference_bus_ids:
        violations.append(Violation("tn.reference_bus_ids", "empty reference set"))

    for bus_id in tn.reference_bus_ids:
        if bus_id not in known:
            violations.append(
                Violation("tn.reference_bus_ids", f"unknown bus {bus_id}")
            )

    for bus_id in tn.boundary_bus_ids:
        if bus_id not in known:
            violations.append(Violation("tn.boundary_bus_ids", f"unknown bus {bus_id}"))

    boundary = set(tn.boundary_bus_ids)
    for i, bus in enumerate(tn.buses):
        path = f"tn.buses[{i}]"
        _check_profile(violations, f"{path}.demand", bus.demand, horizon)
        if bus.pg_max:
            _check_profile(violations, f"{path}.pg_max", bus.pg_max, horizon)

        if bus.gen_cost[0] < 0:
            violations.append(Violation(f"{path}.gen_cost", "Ca < 0 (non-convex)"))

        if not 0.0 <= bus.pv_capacity_ratio <= 1.0:
            violations.append(Violation(f"{path}.pv_capacity_ratio", "outside [0, 1]"))

        if bus.kt_bg_limit < 0 or bus.pv_marginal_cost < 0:
            violations.append(Violation(path, "negative limit or price"))

        if bus.id in boundary and (
            bus.has_generation or bus.has_pv or any(d > 0 for d in bus.demand)
        ):
            violations.append(
                Violation(path, "boundary bus hosts generation or demand")
            )

    pairs = set()
    for i, line in enumerate(tn.lines):
        path = f"tn.lines[{i}]"
        if (line.from_bus not in known) or (line.to_bus not in known):
            violations.append(Violation(path, "dangling line endpoint"))

        if line.reactance <= 0:
            violations.append(Violation(path, "reactance <= 0"))

        if line.flow_limit <= 0:
            violations.append(Violation(path, "flow limit <= 0"))

        key = (line.from_bus, line.to_bus)
        if key in pairs or key[::-1] in pairs:
            violations.append(Violation(path, "parallel line"))

        pairs.add(key)

    edges = [
        (line.from_bus, line.to_bus)
        for line in tn.lines
        if line.from_bus in known and line.to_bus in known
    ]
    if bus_ids and not _is_connected(list(dict.fromkeys(bus_ids)), edges):
        violations.append(Violation("tn.lines", "network is not connected"))


def _validate_battery(
    violations: List[Violation], path: str, bess: BessSpec
) -> None:
    if not 0.0 <= bess.soc_min <= bess.soc_max:
        violations.append(Violation(path, "soc bounds not 0 <= min <= max"))

    if not (0.0 < bess.eff_charge <= 1.0 and 0.0 < bess.eff_discharge <= 1.0):
        violations.append(Violation(path, "efficiency outside (0, 1]"))

    if bess.capacity < 0 or bess.rated_power < 0:
        violations.append(Violation(path, "negative capacity or power"))

    low = bess.soc_min * bess.capacity
    high = bess.soc_max * bess.capacity
    if not (low - _EPS <= bess.soc_initial <= high + _EPS):
        violations.append(Violation(path, "soc_initial outside soc bounds"))


def _validate_distribution(
    k: int,
    dn: DistributionNetwork,
    tn: TransmissionNetwork,
    horizon: int,
    violations: List[Violation],
) -> None:
    prefix = f"adns[{k}]"
    if dn.id not in set(tn.boundary_bus_ids):
        violations.append(Violation(f"{prefix}.id", f"unattached ADN at bus {dn.id}"))

    bus_ids = [bus.id for bus in dn.buses]
    known = set(bus_ids)
    if len(known) != len(bus_ids):
        violations.append(Violation(f"{prefix}.buses", "duplicate bus id"))

    agents = set(dn.agent_bus_ids)
    boundary = set(dn.boundary_bus_ids)
    if not boundary:
        violations.append(Violation(f"{prefix}.boundary_bus_ids", "empty"))

    if agents & boundary:
        violations.append(Violation(prefix, "agent and boundary sets overlap"))

    if not (agents | boundary) <= known:
        violations.append(Violation(prefix, "agent/boundary id not a bus"))

    for bus_id in sorted(known - agents - boundary):
        violations.append(
            Violation(prefix, f"bus {bus_id} is neither an agent nor a boundary bus")
        )

    n_boundary = len(dn.boundary_bus_ids)
    for name in ("k_sg", "k_bgc", "k_bge"):
        caps = getattr(dn, name)
        if len(caps) != n_boundary or any(c < 0 for c in caps):
            violations.append(Violation(f"{prefix}.{name}", "invalid exchange caps"))

    for i, bus in enumerate(dn.buses):
        path = f"{prefix}.buses[{i}]"
        _check_profile(violations, f"{path}.demand", bus.demand, horizon)
        if len(bus.reactive_demand) != horizon:
            violations.append(Violation(f"{path}.reactive_demand", "bad length"))

        if bus.v_min > bus.v_max:
            violations.append(Violation(path, "v_min > v_max"))

        if bus.qg_min > bus.qg_max:
            violations.append(Violation(path, "qg_min > qg_max"))

        if not 0.0 <= bus.pv_capacity_ratio <= 1.0:
            violations.append(Violation(f"{path}.pv_capacity_ratio", "outside [0, 1]"))

        if bus.battery is not None:
            _validate_battery(violations, f"{path}.battery", bus.battery)

        if bus.id in boundary and (
            any(d > 0 for d in bus.demand)
            or bus.pv_capacity_ratio > 0
            or bus.battery is not None
        ):
            violations.append(Violation(path, "boundary bus hosts demand or DER"))

    for i, line in enumerate(dn.lines):
        path = f"{prefix}.lines[{i}]"
        if (line.from_bus not in known) or (line.to_bus not in known):
            violations.append(Violation(path, "dangling line endpoint"))

        if line.resistance < 0 or line.reactance < 0:
            violations.append(Violation(path, "negative impedance"))

        if line.resistance == 0 and line.reactance == 0:
            violations.append(Violation(path, "zero impedance"))

        if line.current_sq_limit <= 0:
            violations.append(Violation(path, "current limit <= 0"))

    if not is_radial(dn):
        violations.append(Violation(f"{prefix}.lines", "non-radial topology"))


def is_radial(dn: DistributionNetwork) -> bool:
    """True if the directed lines form a tree rooted at the first boundary bus"""
    bus_ids = [bus.id for bus in dn.buses]
    if not dn.boundary_bus_ids or len(dn.lines) != len(bus_ids) - 1:
        return False

    incoming: Dict[int, int] = {}
    for line in dn.lines:
        incoming[line.to_bus] = incoming.get(line.to_bus, 0) + 1

    if incoming.get(dn.root_bus_id, 0) != 0:
        return False

    for bus_id in bus_ids:
        if bus_id != dn.root_bus_id and incoming.get(bus_id, 0) != 1:
            return False

    edges = [(line.from_bus, line.to_bus) for line in dn.lines]
    known = set(bus_ids)
    if any(a not in known or b not in known for a, b in edges):
        return False

    return _is_connected(bus_ids, edges)


def _validate_config(cfg: ScenarioConfig, violations: List[Violation]) -> None:
    if cfg.horizon < 1:
        violations.append(Violation("cfg.horizon", "T < 1"))
        return

    if cfg.step_hours <= 0:
        violations.append(Violation("cfg.step_hours", "step <= 0"))

    for name in (
        "price_bgc",
        "price_bge",
        "price_sg",
        "pv_availability_tn",
        "pv_availability_dn",
    ):
        if len(getattr(cfg, name)) != cfg.horizon:
            violations.append(Violation(f"cfg.{name}", "length != horizon"))

    for t in cfg.periods:
        if t >= min(len(cfg.price_sg), len(cfg.price_bgc), len(cfg.price_bge)):
            break

        if not (cfg.price_sg[t] <= cfg.price_bgc[t] <= cfg.price_bge[t]):
            violations.append(
                Violation(f"cfg.prices[{t}]", "price ordering sg <= bgc <= bge violated")
            )

    if cfg.big_m_tso <= 0 or (cfg.big_m_p2p is not None and cfg.big_m_p2p <= 0):
        violations.append(Violation("cfg.big_m", "Big-M must be > 0"))


def validate_scenario(
    tn: TransmissionNetwork,
    adns: Sequence[DistributionNetwork],
    cfg: ScenarioConfig,
) -> ValidationReport:
    """Check every type invariant and the ADN attachments"""
    violations: List[Violation] = []
    _validate_config(cfg, violations)
    _validate_transmission(tn, cfg.horizon, violations)

    seen = set()
    for k, dn in enumerate(adns):
        if dn.id in seen:
            violations.append(Violation(f"adns[{k}].id", "duplicate ADN id"))

        seen.add(dn.id)
        _validate_distribution(k, dn, tn, cfg.horizon, violations)

    if violations:
        _LOGGER.debug("Validation found %s violation(s)", len(violations))

    return ValidationReport(tuple(violations))
