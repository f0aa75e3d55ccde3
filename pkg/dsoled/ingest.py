"""Case files, study bundles and scenario serialization"""
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from .config import ScenarioConfig
from .conic import ConicSubproblemSolver
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
    ValidationReport,
    validate_scenario,
)
from .profiles import ProfileSet, ProfileSpec, synthesize_profiles
from .transmission import build_tn_program, solve_tn_direct, thermal_marginal_costs

_DIR = Path(__file__).parent
_CASES_DIR = _DIR / "cases"
_LOGGER = logging.getLogger(__name__)

# MATPOWER column positions
BUS_I, BUS_TYPE, PD, QD, BASE_KV, VMAX, VMIN = 0, 1, 2, 3, 9, 11, 12
GEN_BUS, QMAX, QMIN, GEN_STATUS, PMAX = 0, 3, 4, 7, 8
F_BUS, T_BUS, BR_R, BR_X, RATE_A, BR_STATUS = 0, 1, 2, 3, 5, 10
REF_BUS_TYPE = 3

_MIN_COLUMNS = {"bus": 13, "gen": 10, "branch": 13, "gencost": 5}

# MATPOWER convention for an unrated branch
UNRATED_FLOW_LIMIT = 9900.0

_ALLOCATION_TOL = 1e-9


class ParseError(Exception):
    def __init__(self, path: Union[str, Path], line: int, column: int, message: str) -> None:
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.path = str(path)
        self.line = line
        self.column = column


class SchemaError(Exception):
    pass


class ValidationError(Exception):
    def __init__(self, report: ValidationReport) -> None:
        super().__init__("; ".join(report.messages()))
        self.report = report


class AllocationError(Exception):
    pass


class MissingBatterySpec(Exception):
    pass


@dataclass(frozen=True)
class Attachment:
    """Per-ADN scaling of the template feeder"""

    peak_mw: float
    pv_mw: float
    bess_mwh: float

    @staticmethod
    def from_dict(config: Mapping[str, Any]) -> "Attachment":
        return Attachment(
            peak_mw=float(config["peak_mw"]),
            pv_mw=float(config.get("pv_mw", 0.0)),
            bess_mwh=float(config.get("bess_mwh", 0.0)),
        )


@dataclass(frozen=True)
class BatteryDefaults:
    power_ratio: float = 0.5
    """Rated power per MWh of capacity"""

    soc_min: float = 0.1
    soc_max: float = 0.9
    eff_charge: float = 0.95
    eff_discharge: float = 0.95

    @staticmethod
    def from_dict(config: Mapping[str, Any]) -> "BatteryDefaults":
        return BatteryDefaults(
            power_ratio=float(config.get("power_ratio", 0.5)),
            soc_min=float(config.get("soc_min", 0.1)),
            soc_max=float(config.get("soc_max", 0.9)),
            eff_charge=float(config.get("eff_charge", 0.95)),
            eff_discharge=float(config.get("eff_discharge", 0.95)),
        )

    def spec(self, capacity: float) -> BessSpec:
        return BessSpec(
            installed=True,
            capacity=capacity,
            rated_power=self.power_ratio * capacity,
            soc_min=self.soc_min,
            soc_max=self.soc_max,
            eff_charge=self.eff_charge,
            eff_discharge=self.eff_discharge,
            soc_initial=self.soc_min * capacity,
        )


@dataclass(frozen=True)
class CaseBundle:
    """Transmission case, ADN template and the attachments between them"""

    tn_file: str
    """Path, or name of an embedded case"""

    adn_template: str
    attachments: Dict[int, Attachment] = field(default_factory=dict)
    """TN boundary bus -> scaling"""

    profile_spec: ProfileSpec = field(default_factory=ProfileSpec)

    boundary: Optional[Tuple[int, ...]] = None
    """Overrides the case's boundary list"""

    pv_plants: Dict[int, float] = field(default_factory=dict)
    """TN bus -> PV plant MW"""

    replace_thermal: bool = False
    """PV plants replace the thermal unit at their bus"""

    td_peak_mw: Optional[float] = None
    """Sum of non-boundary TN peak loads after scaling"""

    battery: Optional[BatteryDefaults] = None
    pv_reference_tn: float = 40.0
    pv_reference_dn: float = 1.0
    pv_marginal_cost: float = 0.5
    sale_price_ratio: float = 0.8
    exchange_cap_factor: float = 1.5

    scenario: Dict[str, Any] = field(default_factory=dict)
    """ScenarioConfig overrides"""

    base_dir: Optional[str] = None

    @staticmethod
    def from_dict(config: Mapping[str, Any], base_dir: Optional[str] = None) -> "CaseBundle":
        try:
            boundary = config.get("boundary")
            battery = config.get("battery")
            td_peak = config.get("td_peak_mw")
            return CaseBundle(
                tn_file=str(config["tn_case"]),
                adn_template=str(config["adn_template"]),
                attachments={
                    int(bus): Attachment.from_dict(values)
                    for bus, values in config.get("attachments", {}).items()
                },
                profile_spec=ProfileSpec.from_dict(config.get("profiles", {})),
                boundary=None if boundary is None else tuple(int(b) for b in boundary),
                pv_plants={int(b): float(mw) for b, mw in config.get("pv_plants", {}).items()},
                replace_thermal=bool(config.get("replace_thermal", False)),
                td_peak_mw=None if td_peak is None else float(td_peak),
                battery=None if battery is None else BatteryDefaults.from_dict(battery),
                pv_reference_tn=float(config.get("pv_reference_tn", 40.0)),
                pv_reference_dn=float(config.get("pv_reference_dn", 1.0)),
                pv_marginal_cost=float(config.get("pv_marginal_cost", 0.5)),
                sale_price_ratio=float(config.get("sale_price_ratio", 0.8)),
                exchange_cap_factor=float(config.get("exchange_cap_factor", 1.5)),
                scenario=dict(config.get("scenario", {})),
                base_dir=base_dir,
            )
        except KeyError as err:
            raise SchemaError(f"Missing bundle field {err}") from err
        except (TypeError, ValueError, AttributeError) as err:
            raise SchemaError(f"Malformed bundle: {err}") from err

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tn_case": self.tn_file,
            "adn_template": self.adn_template,
            "attachments": {
                str(bus): asdict(attachment) for bus, attachment in self.attachments.items()
            },
            "profiles": self.profile_spec.to_dict(),
            "boundary": None if self.boundary is None else list(self.boundary),
            "pv_plants": {str(bus): mw for bus, mw in self.pv_plants.items()},
            "replace_thermal": self.replace_thermal,
            "td_peak_mw": self.td_peak_mw,
            "battery": None if self.battery is None else asdict(self.battery),
            "pv_reference_tn": self.pv_reference_tn,
            "pv_reference_dn": self.pv_reference_dn,
            "pv_marginal_cost": self.pv_marginal_cost,
            "sale_price_ratio": self.sale_price_ratio,
            "exchange_cap_factor": self.exchange_cap_factor,
            "scenario": dict(self.scenario),
        }

    def with_scenario(self, **overrides: Any) -> "CaseBundle":
        """Copy with scenario overrides (None values are ignored)"""
        scenario = dict(self.scenario)
        scenario.update({k: v for k, v in overrides.items() if v is not None})
        return replace(self, scenario=scenario)


# -----------------------------------------------------------------------------


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as json_file:
        try:
            return json.load(json_file)
        except json.JSONDecodeError as err:
            raise ParseError(path, err.lineno, err.colno, err.msg) from err


def resolve_case(ref: str, base_dir: Optional[str] = None) -> Path:
    """A file path (absolute or relative to base_dir) or an embedded case name"""
    candidates = [Path(ref)]
    if base_dir is not None:
        candidates.append(Path(base_dir) / ref)

    candidates.append(_CASES_DIR / f"{ref}.json")
    for candidate in candidates:
        if candidate.is_file():
            return candidate

    raise FileNotFoundError(f"No case file or embedded case named {ref}")


def embedded_cases() -> List[str]:
    return sorted(path.stem for path in _CASES_DIR.glob("*.json"))


def load_bundle(ref: Union[str, Path]) -> CaseBundle:
    path = resolve_case(str(ref))
    _LOGGER.debug("Loading bundle %s", path)
    return CaseBundle.from_dict(read_json(path), base_dir=str(path.parent))


def read_case(path: Union[str, Path]) -> Dict[str, Any]:
    case = read_json(path)
    if not isinstance(case, dict):
        raise SchemaError(f"{path}: case must be an object")

    for table in ("baseMVA", "bus", "branch"):
        if table not in case:
            raise SchemaError(f"{path}: missing field {table}")

    for table, width in _MIN_COLUMNS.items():
        for k, row in enumerate(case.get(table, [])):
            if len(row) < width:
                raise SchemaError(f"{path}: {table}[{k}] has {len(row)} column(s), needs {width}")

    if len(case.get("gencost", [])) < len(case.get("gen", [])):
        raise SchemaError(f"{path}: fewer gencost than gen rows")

    return case


def _cost_coefficients(row: Sequence[float]) -> Tuple[float, float, float]:
    """(Ca, Cb, Cc) of a polynomial MATPOWER cost row"""
    model, n_coeffs = int(row[0]), int(row[3])
    if model != 2:
        raise SchemaError(f"Unexpected cost model: {model}")

    coeffs = [float(c) for c in row[4 : 4 + n_coeffs]]
    if len(coeffs) != n_coeffs or n_coeffs > 3:
        raise SchemaError(f"Unexpected cost row: {row}")

    coeffs = [0.0] * (3 - n_coeffs) + coeffs
    return coeffs[0], coeffs[1], coeffs[2]


def read_transmission(
    case: Mapping[str, Any],
    bundle: CaseBundle,
    profiles: ProfileSet,
) -> TransmissionNetwork:
    horizon = profiles.horizon
    boundary = tuple(bundle.boundary if bundle.boundary is not None else case.get("boundary", []))
    boundary_set = set(boundary)

    units: Dict[int, Tuple[float, Tuple[float, float, float]]] = {}
    for row, cost in zip(case.get("gen", []), case.get("gencost", [])):
        bus_id = int(row[GEN_BUS])
        if row[GEN_STATUS] <= 0:
            continue

        if bundle.replace_thermal and bus_id in bundle.pv_plants:
            continue

        if bus_id in units:
            raise SchemaError(f"Several generators at bus {bus_id}")

        units[bus_id] = (float(row[PMAX]), _cost_coefficients(cost))

    load_rows = [
        row for row in case["bus"] if int(row[BUS_I]) not in boundary_set and row[PD] > 0
    ]
    scale = 1.0
    if bundle.td_peak_mw is not None and load_rows:
        scale = bundle.td_peak_mw / sum(float(row[PD]) for row in load_rows)

    profile_of = {int(row[BUS_I]): k for k, row in enumerate(load_rows)}
    buses = []
    for row in sorted(case["bus"], key=lambda r: int(r[BUS_I])):
        bus_id = int(row[BUS_I])
        if bus_id in boundary_set:
            demand = tuple(0.0 for _ in range(horizon))
        elif bus_id in profile_of:
            peak = float(row[PD]) * scale
            demand = tuple(peak * v for v in profiles.curve(profile_of[bus_id]))
        else:
            demand = tuple(0.0 for _ in range(horizon))

        pg_max: Tuple[float, ...] = ()
        gen_cost = (0.0, 0.0, 0.0)
        if bus_id in units:
            pmax, gen_cost = units[bus_id]
            pg_max = tuple(pmax for _ in range(horizon))

        attachment = bundle.attachments.get(bus_id)
        buses.append(
            TnBus(
                id=bus_id,
                demand=demand,
                gen_cost=gen_cost,
                pg_max=pg_max,
                pv_marginal_cost=bundle.pv_marginal_cost if bus_id in bundle.pv_plants else 0.0,
                pv_capacity_ratio=bundle.pv_plants.get(bus_id, 0.0) / bundle.pv_reference_tn,
                kt_bg_limit=0.0
                if attachment is None
                else bundle.exchange_cap_factor * attachment.peak_mw,
            )
        )

    lines = []
    for row in case["branch"]:
        if row[BR_STATUS] <= 0:
            continue

        rating = float(row[RATE_A])
        lines.append(
            TnLine(
                from_bus=int(row[F_BUS]),
                to_bus=int(row[T_BUS]),
                reactance=float(row[BR_X]),
                flow_limit=rating if rating > 0 else UNRATED_FLOW_LIMIT,
            )
        )

    reference = tuple(
        int(row[BUS_I]) for row in case["bus"] if int(row[BUS_TYPE]) == REF_BUS_TYPE
    )

    return TransmissionNetwork(
        buses=tuple(buses),
        lines=tuple(lines),
        boundary_bus_ids=tuple(sorted(boundary)),
        reference_bus_ids=reference,
        base_mva=float(case["baseMVA"]),
    )


def read_distribution(
    case: Mapping[str, Any],
    adn_id: int,
    profiles: ProfileSet,
    cap_factor: float = 1.5,
) -> DistributionNetwork:
    """Template feeder: the reference bus is the boundary bus, every other bus an agent"""
    base_mva = float(case["baseMVA"])
    roots = [int(row[BUS_I]) for row in case["bus"] if int(row[BUS_TYPE]) == REF_BUS_TYPE]
    if len(roots) != 1:
        raise SchemaError(f"Feeder needs exactly one reference bus, found {len(roots)}")

    root = roots[0]
    base_kv = float(case["bus"][0][BASE_KV])
    z_base = base_kv**2 / base_mva
    in_ohm = case.get("branch_units", "pu") == "ohm"
    if in_ohm and base_kv <= 0:
        raise SchemaError("Branch impedances in ohm need a bus base voltage")

    reactive_limits = {
        int(row[GEN_BUS]): (float(row[QMIN]), float(row[QMAX]))
        for row in case.get("gen", [])
        if row[GEN_STATUS] > 0
    }

    rows = sorted(case["bus"], key=lambda r: int(r[BUS_I]))
    agents = [int(row[BUS_I]) for row in rows if int(row[BUS_I]) != root]
    buses = []
    for row in rows:
        bus_id = int(row[BUS_I])
        if bus_id == root:
            curve: Tuple[float, ...] = tuple(0.0 for _ in range(profiles.horizon))
        else:
            curve = profiles.curve(agents.index(bus_id))

        qg_min, qg_max = reactive_limits.get(bus_id, (0.0, 0.0))
        buses.append(
            DnBus(
                id=bus_id,
                demand=tuple(float(row[PD]) * v for v in curve),
                reactive_demand=tuple(float(row[QD]) * v for v in curve),
                qg_min=qg_min,
                qg_max=qg_max,
                v_min=float(row[VMIN]) ** 2,
                v_max=float(row[VMAX]) ** 2,
            )
        )

    default_limit = float(case.get("current_sq_limit", 1.0))
    lines = []
    for row in case["branch"]:
        if row[BR_STATUS] <= 0:
            continue

        r, x = float(row[BR_R]), float(row[BR_X])
        if in_ohm:
            r, x = r / z_base, x / z_base

        rating = float(row[RATE_A])
        lines.append(
            DnLine(
                from_bus=int(row[F_BUS]),
                to_bus=int(row[T_BUS]),
                resistance=r,
                reactance=x,
                current_sq_limit=(rating / base_mva) ** 2 if rating > 0 else default_limit,
            )
        )

    dn = DistributionNetwork(
        id=adn_id,
        buses=tuple(buses),
        lines=tuple(lines),
        agent_bus_ids=tuple(agents),
        boundary_bus_ids=(root,),
        k_sg=(0.0,),
        k_bgc=(0.0,),
        k_bge=(0.0,),
        base_mva=base_mva,
    )
    peak = dn.peak_load()
    return replace(dn, k_bgc=(cap_factor * peak,), k_bge=(cap_factor * peak,))


def _allocate(target: float, sites: Sequence[int], limit: float, what: str) -> Dict[int, float]:
    """Uniform share over the sites, capped at the limit; the last site takes the remainder"""
    if target <= 0:
        return {}

    if not sites:
        raise AllocationError(f"No site to place {target:.6g} of {what}")

    share = min(target / len(sites), limit)
    values = {site: share for site in sites[:-1]}
    remainder = target - share * (len(sites) - 1)
    if remainder > limit + _ALLOCATION_TOL or remainder < -_ALLOCATION_TOL:
        raise AllocationError(
            f"Cannot place {target:.6g} of {what} on {len(sites)} site(s) (limit {limit:.6g})"
        )

    values[sites[-1]] = min(max(remainder, 0.0), limit)
    return {site: value for site, value in values.items() if value > 0}


def placement_sites(dn: DistributionNetwork) -> List[int]:
    """Every other agent bus, ordered by id"""
    return sorted(dn.agent_bus_ids)[::2]


def scale_adn(
    template: DistributionNetwork,
    peak_mw: float,
    pv_mw: float,
    bess_mwh: float,
    battery: Optional[BatteryDefaults] = None,
    pv_reference_mw: float = 1.0,
    cap_factor: float = 1.5,
    pv_site_limit: float = 1.0,
) -> DistributionNetwork:
    """Scale demand to the peak target and place PV and battery capacity.

    Args:
        peak_mw: sum of per-bus peak demands after scaling (not the coincident
            peak of the feeder); sizing_report uses the same convention
        pv_mw: installed PV, placed as capacity ratios of pv_reference_mw
        bess_mwh: installed battery capacity
        battery: battery parameters, required when bess_mwh > 0
        pv_site_limit: largest capacity ratio per bus

    Returns:
        scaled copy with exchange caps K^sg = pv_mw and K^bgc = K^bge = cap_factor * peak_mw
    """
    template_peak = template.peak_load()
    if peak_mw <= 0 or template_peak <= 0:
        raise AllocationError(f"Cannot scale ADN {template.id} to a peak of {peak_mw}")

    if pv_mw < 0 or bess_mwh < 0:
        raise AllocationError("Negative PV or battery target")

    if bess_mwh > 0 and battery is None:
        raise MissingBatterySpec(f"ADN {template.id} gets {bess_mwh} MWh but no battery spec")

    factor = peak_mw / template_peak
    sites = placement_sites(template)
    pv_ratio = _allocate(pv_mw / pv_reference_mw, sites, pv_site_limit, "PV")
    capacity = _allocate(bess_mwh, sites, float("inf"), "battery capacity")

    buses = []
    for bus in template.buses:
        bess = None
        if bus.id in capacity:
            assert battery is not None
            bess = battery.spec(capacity[bus.id])

        buses.append(
            replace(
                bus,
                demand=tuple(float(d * factor) for d in bus.demand),
                reactive_demand=tuple(float(q * factor) for q in bus.reactive_demand),
                pv_capacity_ratio=float(pv_ratio.get(bus.id, 0.0)),
                battery=bess,
            )
        )

    n_boundary = len(template.boundary_bus_ids)
    return replace(
        template,
        buses=tuple(buses),
        k_sg=tuple(float(pv_mw) for _ in range(n_boundary)),
        k_bgc=tuple(cap_factor * peak_mw for _ in range(n_boundary)),
        k_bge=tuple(cap_factor * peak_mw for _ in range(n_boundary)),
    )


@dataclass(frozen=True)
class AdnSizing:
    """Installed resources of one ADN against its peak load"""

    adn_id: int
    peak_mw: float
    pv_mw: float
    bess_mwh: float

    @property
    def pv_share(self) -> float:
        return self.pv_mw / self.peak_mw if self.peak_mw > 0 else 0.0

    @property
    def bess_share(self) -> float:
        return self.bess_mwh / self.peak_mw if self.peak_mw > 0 else 0.0


@dataclass(frozen=True)
class SizingReport:
    """Peaks are sums of per-bus peak demands, not coincident peaks"""

    adns: Tuple[AdnSizing, ...]
    interior_peak_mw: float
    """Peak of the TN buses without an ADN"""

    @property
    def adn_peak_mw(self) -> float:
        return float(sum(s.peak_mw for s in self.adns))

    @property
    def system_peak_mw(self) -> float:
        return self.interior_peak_mw + self.adn_peak_mw

    @property
    def adn_peak_share(self) -> float:
        return self.adn_peak_mw / self.system_peak_mw if self.system_peak_mw > 0 else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "adn": [s.adn_id for s in self.adns],
                "peak_mw": [s.peak_mw for s in self.adns],
                "pv_mw": [s.pv_mw for s in self.adns],
                "bess_mwh": [s.bess_mwh for s in self.adns],
                "pv_share": [s.pv_share for s in self.adns],
                "bess_share": [s.bess_share for s in self.adns],
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "interior_peak_mw": self.interior_peak_mw,
            "adn_peak_mw": self.adn_peak_mw,
            "system_peak_mw": self.system_peak_mw,
            "adn_peak_share": self.adn_peak_share,
        }


def sizing_report(scenario: Scenario) -> SizingReport:
    tn, adns, cfg = scenario
    interior = sum(max(tn.bus(b).demand, default=0.0) for b in tn.interior_bus_ids)
    return SizingReport(
        adns=tuple(
            AdnSizing(
                adn_id=dn.id,
                peak_mw=dn.peak_load(),
                pv_mw=dn.installed_pv(cfg.pv_reference_dn),
                bess_mwh=dn.installed_bess(),
            )
            for dn in adns
        ),
        interior_peak_mw=float(interior),
    )


def reference_expensive_price(
    tn: TransmissionNetwork,
    adns: Sequence[DistributionNetwork],
    cfg: ScenarioConfig,
    solver: Optional[ConicSubproblemSolver] = None,
) -> List[float]:
    """Highest thermal marginal cost with ADN demand served as thermal energy,
    floored at the cheap-energy price"""
    zeros = [0.0] * cfg.horizon
    fixing: Dict[Tuple[str, int], Sequence[float]] = {}
    for bus_id in tn.boundary_bus_ids:
        for kind in (PK_BG, PK_SGC, PK_SGE):
            fixing[(kind, bus_id)] = zeros

    for dn in adns:
        fixing[(PK_SGE, dn.id)] = [float(d) for d in dn.total_demand()]

    prog = build_tn_program(tn, cfg, boundary_fixing=fixing)
    sol = solve_tn_direct(prog, solver=solver)
    costs = thermal_marginal_costs(tn, sol)
    return [max(cost, floor) for cost, floor in zip(costs, cfg.price_bgc)]


def _scenario_config(
    bundle: CaseBundle,
    profiles: ProfileSet,
    tn: TransmissionNetwork,
    adns: Sequence[DistributionNetwork],
    solver: Optional[ConicSubproblemSolver],
) -> ScenarioConfig:
    settings: Dict[str, Any] = {
        "horizon": profiles.horizon,
        "step_hours": 1.0,
        "price_bgc": bundle.pv_marginal_cost,
        "price_sg": bundle.sale_price_ratio * bundle.pv_marginal_cost,
        "pv_availability_tn": [bundle.pv_reference_tn * float(v) for v in profiles.pv_tn],
        "pv_availability_dn": [bundle.pv_reference_dn * float(v) for v in profiles.pv_dn],
        "pv_reference_dn": bundle.pv_reference_dn,
        "seed": bundle.profile_spec.seed,
    }
    settings.update(bundle.scenario)
    if "price_bge" not in settings:
        provisional = ScenarioConfig.from_dict({**settings, "price_bge": settings["price_bgc"]})
        settings["price_bge"] = reference_expensive_price(tn, adns, provisional, solver)

    return ScenarioConfig.from_dict(settings)


def load_case(bundle: CaseBundle, solver: Optional[ConicSubproblemSolver] = None) -> Scenario:
    """Validated scenario from a bundle; unpacks as (tn, adns, cfg)"""
    horizon = int(bundle.scenario.get("horizon", 24))
    profiles = synthesize_profiles(bundle.profile_spec, horizon)
    tn_case = read_case(resolve_case(bundle.tn_file, bundle.base_dir))
    boundary = set(
        bundle.boundary if bundle.boundary is not None else tn_case.get("boundary", [])
    )
    stray = sorted(set(bundle.attachments) - boundary)
    if stray:
        raise SchemaError(f"Attachments at non-boundary bus(es) {stray}")

    for attachment in bundle.attachments.values():
        if attachment.peak_mw <= 0:
            raise SchemaError("Attachment peak must be > 0")

    tn = read_transmission(tn_case, bundle, profiles)
    adns: List[DistributionNetwork] = []
    if bundle.attachments:
        dn_case = read_case(resolve_case(bundle.adn_template, bundle.base_dir))
        template = read_distribution(dn_case, 0, profiles, bundle.exchange_cap_factor)
        for bus_id, attachment in sorted(bundle.attachments.items()):
            adns.append(
                scale_adn(
                    replace(template, id=bus_id),
                    attachment.peak_mw,
                    attachment.pv_mw,
                    attachment.bess_mwh,
                    battery=bundle.battery,
                    pv_reference_mw=bundle.pv_reference_dn,
                    cap_factor=bundle.exchange_cap_factor,
                )
            )

    cfg = _scenario_config(bundle, profiles, tn, adns, solver)
    report = validate_scenario(tn, adns, cfg)
    if not report.ok:
        raise ValidationError(report)

    _LOGGER.debug(
        "Loaded %s TN bus(es), %s line(s), %s ADN(s) over %s period(s)",
        len(tn.buses),
        len(tn.lines),
        len(adns),
        cfg.horizon,
    )

    return Scenario(tn, tuple(adns), cfg)


# -----------------------------------------------------------------------------


def dump_scenario(scenario: Scenario) -> Dict[str, Any]:
    """JSON-ready structure of a scenario"""
    return {
        "tn": asdict(scenario.tn),
        "adns": [asdict(dn) for dn in scenario.adns],
        "cfg": scenario.cfg.to_dict(),
    }


def _floats(values: Sequence[Any]) -> Tuple[float, ...]:
    return tuple(float(v) for v in values)


def _ints(values: Sequence[Any]) -> Tuple[int, ...]:
    return tuple(int(v) for v in values)


def _parse_tn(data: Mapping[str, Any]) -> TransmissionNetwork:
    return TransmissionNetwork(
        buses=tuple(
            TnBus(
                id=int(bus["id"]),
                demand=_floats(bus["demand"]),
                gen_cost=_floats(bus["gen_cost"]),  # type: ignore[arg-type]
                pg_max=_floats(bus["pg_max"]),
                pv_marginal_cost=float(bus["pv_marginal_cost"]),
                pv_capacity_ratio=float(bus["pv_capacity_ratio"]),
                kt_bg_limit=float(bus["kt_bg_limit"]),
            )
            for bus in data["buses"]
        ),
        lines=tuple(
            TnLine(
                from_bus=int(line["from_bus"]),
                to_bus=int(line["to_bus"]),
                reactance=float(line["reactance"]),
                flow_limit=float(line["flow_limit"]),
            )
            for line in data["lines"]
        ),
        boundary_bus_ids=_ints(data["boundary_bus_ids"]),
        reference_bus_ids=_ints(data["reference_bus_ids"]),
        base_mva=float(data["base_mva"]),
    )


def _parse_battery(data: Optional[Mapping[str, Any]]) -> Optional[BessSpec]:
    if data is None:
        return None

    return BessSpec(
        installed=bool(data["installed"]),
        capacity=float(data["capacity"]),
        rated_power=float(data["rated_power"]),
        soc_min=float(data["soc_min"]),
        soc_max=float(data["soc_max"]),
        eff_charge=float(data["eff_charge"]),
        eff_discharge=float(data["eff_discharge"]),
        soc_initial=float(data["soc_initial"]),
    )


def _parse_dn(data: Mapping[str, Any]) -> DistributionNetwork:
    return DistributionNetwork(
        id=int(data["id"]),
        buses=tuple(
            DnBus(
                id=int(bus["id"]),
                demand=_floats(bus["demand"]),
                reactive_demand=_floats(bus["reactive_demand"]),
                qg_min=float(bus["qg_min"]),
                qg_max=float(bus["qg_max"]),
                v_min=float(bus["v_min"]),
                v_max=float(bus["v_max"]),
                pv_capacity_ratio=float(bus["pv_capacity_ratio"]),
                battery=_parse_battery(bus.get("battery")),
            )
            for bus in data["buses"]
        ),
        lines=tuple(
            DnLine(
                from_bus=int(line["from_bus"]),
                to_bus=int(line["to_bus"]),
                resistance=float(line["resistance"]),
                reactance=float(line["reactance"]),
                current_sq_limit=float(line["current_sq_limit"]),
            )
            for line in data["lines"]
        ),
        agent_bus_ids=_ints(data["agent_bus_ids"]),
        boundary_bus_ids=_ints(data["boundary_bus_ids"]),
        k_sg=_floats(data["k_sg"]),
        k_bgc=_floats(data["k_bgc"]),
        k_bge=_floats(data["k_bge"]),
        base_mva=float(data["base_mva"]),
    )


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    try:
        return Scenario(
            tn=_parse_tn(data["tn"]),
            adns=tuple(_parse_dn(dn) for dn in data["adns"]),
            cfg=ScenarioConfig.from_dict(data["cfg"]),
        )
    except KeyError as err:
        raise SchemaError(f"Missing scenario field {err}") from err
    except (TypeError, ValueError) as err:
        raise SchemaError(f"Malformed scenario: {err}") from err


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as scenario_file:
        json.dump(dump_scenario(scenario), scenario_file, indent=2)


def read_scenario(path: Union[str, Path]) -> Scenario:
    return parse_scenario(read_json(path))


def load_scenario(
    ref: Union[str, Path], solver: Optional[ConicSubproblemSolver] = None, **overrides: Any
) -> Scenario:
    """Scenario from a bundle, a serialized scenario, or an embedded bundle name"""
    path = resolve_case(str(ref))
    data = read_json(path)
    if isinstance(data, dict) and "tn" in data and "cfg" in data:
        scenario = parse_scenario(data)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if overrides:
            cfg = ScenarioConfig.from_dict({**scenario.cfg.to_dict(), **overrides})
            scenario = replace(scenario, cfg=cfg)

        report = validate_scenario(scenario.tn, scenario.adns, scenario.cfg)
        if not report.ok:
            raise ValidationError(report)

        return scenario

    bundle = CaseBundle.from_dict(data, base_dir=str(path.parent)).with_scenario(**overrides)
    return load_case(bundle, solver=solver)
