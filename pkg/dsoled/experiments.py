"""Study pipelines: decision sequences, competition, congestion and scaling"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bnb import BnbOptions, BnbReport, BnbStatus, Engine, LimitReached, solve_model
from .config import DecisionSequence, ScenarioConfig
from .conic import ConicSubproblemSolver
from .const import (
    DN_PK_BGC,
    DN_PK_BGE,
    DN_PK_SG,
    PK_BG,
    PK_SGC,
    PK_SGE,
    PV,
)
from .distribution import (
    AdnProgram,
    AdnSolution,
    battery_recursion_check,
    build_adn_program,
    cone_tightness,
    conservation_residual,
    p2p_clearing_check,
)
from .file_hash import get_config_hash
from .ingest import dump_scenario
from .kkt import derive_kkt
from .network import BessSpec, DistributionNetwork, Scenario, TnBus, TransmissionNetwork
from .single_level import assemble_single_level
from .transmission import (
    AGG_CH,
    AGG_DS,
    AGG_PV,
    AggregatedNode,
    Infeasible,
    NotSolved,
    TnSolution,
    build_tn_program,
    solve_tn_direct,
)
from .util import fit_power_law

_LOGGER = logging.getLogger(__name__)

# Flows below this magnitude (MW) give no meaningful percentage change
_FLOW_EPS = 1e-6

LIMIT_STATUSES = ("node_limit", "time_limit")


class StageInfeasible(Exception):
    def __init__(self, stage: int, adn_id: Optional[int], message: str) -> None:
        where = "" if adn_id is None else f" (ADN {adn_id})"
        super().__init__(f"Stage {stage}{where}: {message}")
        self.stage = stage
        self.adn_id = adn_id


@dataclass(frozen=True)
class SolveSettings:
    engine: Engine = Engine.AUTO
    solver: Optional[ConicSubproblemSolver] = None
    opts: BnbOptions = field(default_factory=BnbOptions)
    workers: int = 1
    """Concurrent pipeline runs (independent scenarios only)"""


@dataclass
class ExperimentResult:
    fingerprint: str
    sequence: DecisionSequence
    horizon: int
    step_hours: float
    adn_costs: Dict[int, float]
    exchanges: Dict[int, Dict[str, np.ndarray]]
    """ADN id -> exchange kind -> per-period MW"""

    soc: Dict[int, np.ndarray]
    """ADN id -> summed state of charge per period, MWh"""

    p2p_energy: Dict[int, float]
    demand: Dict[int, np.ndarray]
    system_demand: np.ndarray
    flows: np.ndarray
    """(line, t) MW"""

    lines: Tuple[Tuple[int, int], ...]
    tn_cost: float
    stats: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, float] = field(default_factory=dict)
    solution: Dict[str, float] = field(default_factory=dict)
    """Single-level solution keyed by variable name"""

    node_log: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def adn_ids(self) -> List[int]:
        return sorted(self.adn_costs)

    @property
    def total_cost(self) -> float:
        return float(sum(self.adn_costs.values()))

    @property
    def limit_reached(self) -> bool:
        return self.stats.get("status") in LIMIT_STATUSES

    def tables(self) -> Dict[str, pd.DataFrame]:
        costs = pd.DataFrame(
            {
                "adn": self.adn_ids,
                "cost": [self.adn_costs[k] for k in self.adn_ids],
                "p2p_energy": [self.p2p_energy[k] for k in self.adn_ids],
                "demand_energy": [
                    float(np.sum(self.demand[k]) * self.step_hours) for k in self.adn_ids
                ],
            }
        )

        exchanges = long_frame(
            {
                f"adn{adn_id}.{kind}": series
                for adn_id in self.adn_ids
                for kind, series in self.exchanges[adn_id].items()
            }
        )
        soc = long_frame({f"adn{adn_id}.soc": self.soc[adn_id] for adn_id in self.adn_ids})
        flows = long_frame(
            {f"{a}-{b}": self.flows[k] for k, (a, b) in enumerate(self.lines)}
        )

        return {"adn_costs": costs, "exchanges": exchanges, "soc": soc, "flows": flows}


def long_frame(series: Dict[str, Sequence[float]]) -> pd.DataFrame:
    """Plot-ready (series, index, value) rows"""
    records = [
        (name, index, float(value))
        for name, values in series.items()
        for index, value in enumerate(values)
    ]
    return pd.DataFrame.from_records(records, columns=["series", "index", "value"])


def fingerprint(scenario: Scenario) -> str:
    return get_config_hash(dump_scenario(scenario))


# -----------------------------------------------------------------------------


def solve_adn(
    adn: AdnProgram,
    settings: Optional[SolveSettings] = None,
    reports: Optional[List[BnbReport]] = None,
) -> AdnSolution:
    """One ADN on its own (exchanges free or fixed); its solve report goes to reports"""
    settings = settings or SolveSettings()
    report = _solve(adn.prog, settings)
    assert report.x is not None
    if reports is not None:
        reports.append(report)

    return AdnSolution(adn, report.x)


def _solve(model: Any, settings: SolveSettings) -> BnbReport:
    """solve_model that accepts a limit hit once an incumbent exists"""
    try:
        return solve_model(model, settings.engine, settings.solver, settings.opts)
    except LimitReached as e:
        if not e.report.has_incumbent:
            raise

        _LOGGER.warning("%s; keeping the incumbent", e)
        return e.report


def fold_reports(reports: Sequence[BnbReport]) -> Dict[str, Any]:
    """Worst status and gap over the stage solves of a pipeline"""
    limited = [r for r in reports if r.status.value in LIMIT_STATUSES]
    return {
        "status": limited[0].status.value if limited else BnbStatus.OPTIMAL.value,
        "gap": max((r.gap for r in reports), default=0.0),
        "nodes": sum(r.nodes for r in reports),
        "stage_solves": len(reports),
    }


def adn_checks(sols: Sequence[AdnSolution], cfg: ScenarioConfig) -> Dict[str, float]:
    """Worst conservation, recursion, clearing and cone residuals over the ADNs"""
    checks = {
        "conservation": 0.0,
        "battery_recursion": 0.0,
        "p2p_clearing": 0.0,
        "exclusivity_violations": 0.0,
        "cone_residual": 0.0,
        "elastic_slack": 0.0,
    }
    for sol in sols:
        p2p = p2p_clearing_check(sol)
        checks["conservation"] = max(checks["conservation"], conservation_residual(sol))
        checks["battery_recursion"] = max(
            checks["battery_recursion"], battery_recursion_check(sol, sol.dn, cfg)
        )
        checks["p2p_clearing"] = max(checks["p2p_clearing"], p2p.max_residual())
        checks["exclusivity_violations"] += len(p2p.exclusivity_violations)
        checks["cone_residual"] = max(
            checks["cone_residual"], cone_tightness(sol, cfg.tolerances.cone).max_residual
        )
        checks["elastic_slack"] += sol.elastic_slack()

    return checks


def _result(
    scenario: Scenario,
    sequence: DecisionSequence,
    sols: Sequence[AdnSolution],
    tn_sol: TnSolution,
    stats: Dict[str, Any],
) -> ExperimentResult:
    tn, cfg = scenario.tn, scenario.cfg
    return ExperimentResult(
        fingerprint=fingerprint(scenario),
        sequence=sequence,
        horizon=cfg.horizon,
        step_hours=cfg.step_hours,
        adn_costs={sol.dn.id: sol.exchange_cost() for sol in sols},
        exchanges={sol.dn.id: sol.exchanges() for sol in sols},
        soc={sol.dn.id: sol.soc_total() for sol in sols},
        p2p_energy={sol.dn.id: sol.p2p_energy() for sol in sols},
        demand={sol.dn.id: np.asarray(sol.dn.total_demand(), dtype=float) for sol in sols},
        system_demand=np.asarray(scenario.system_demand(), dtype=float),
        flows=tn_sol.flow_matrix(tn),
        lines=tuple((line.from_bus, line.to_bus) for line in tn.lines),
        tn_cost=tn_sol.generation_cost(),
        stats=stats,
        checks=adn_checks(sols, cfg),
    )


def run_dso_first(
    scenario: Scenario, settings: Optional[SolveSettings] = None
) -> ExperimentResult:
    """DSO-led bilevel problem solved as one single-level model"""
    settings = settings or SolveSettings()
    tn, adns, cfg = scenario
    start_time = time.monotonic()

    tn_prog = build_tn_program(tn, cfg)
    adn_progs = [build_adn_program(dn, cfg) for dn in adns]
    model = assemble_single_level(
        tn_prog, adn_progs, derive_kkt(tn_prog), cfg, solver=settings.solver
    )
    report = _solve(model, settings)
    assert report.x is not None

    solution = model.solution(report.x)
    size = model.size()
    stats: Dict[str, Any] = {
        **report.to_dict(),
        "variables": size.variables,
        "constraints": size.constraints,
        "binaries": size.binaries,
        "wall_seconds": time.monotonic() - start_time,
        "coupling_residual": solution.coupling_residual(),
        "stationarity_residual": solution.stationarity_residual(),
        "complementarity_residual": solution.complementarity_residual(),
        "big_m_saturated": solution.saturation().saturated,
    }
    _LOGGER.info(
        "DSO-first: %s ADN(s), objective %.6g (%s)",
        len(adns),
        report.objective,
        report.status.value,
    )

    result = _result(
        scenario, DecisionSequence.DSO_FIRST, solution.adn_solutions(), solution.tn_solution(), stats
    )
    result.solution = {
        info.name: float(report.x[i]) for i, info in enumerate(model.program.variables)
    }
    result.node_log = list(report.log)

    return result


# -----------------------------------------------------------------------------


def strip_ders(dn: DistributionNetwork) -> DistributionNetwork:
    """Passive copy: no PV, no batteries, no sales"""
    buses = tuple(replace(bus, pv_capacity_ratio=0.0, battery=None) for bus in dn.buses)
    return replace(dn, buses=buses, k_sg=tuple(0.0 for _ in dn.k_sg))


def lumped_battery(dn: DistributionNetwork) -> Optional[BessSpec]:
    """Summed capacity and power; efficiencies of the first unit"""
    units = [bus.battery for bus in dn.buses if bus.battery is not None and bus.battery.installed]
    if not units:
        return None

    capacity = sum(b.capacity for b in units)
    if capacity <= 0:
        return None

    return BessSpec(
        installed=True,
        capacity=capacity,
        rated_power=sum(b.rated_power for b in units),
        soc_min=sum(b.soc_min * b.capacity for b in units) / capacity,
        soc_max=sum(b.soc_max * b.capacity for b in units) / capacity,
        eff_charge=units[0].eff_charge,
        eff_discharge=units[0].eff_discharge,
        soc_initial=sum(b.soc_initial for b in units),
    )


def aggregate_adn(
    dn: DistributionNetwork, cfg: ScenarioConfig, losses: Sequence[float]
) -> AggregatedNode:
    pv_ratio = sum(bus.pv_capacity_ratio for bus in dn.buses)
    demand = np.asarray(dn.total_demand(), dtype=float) + np.asarray(losses, dtype=float)
    return AggregatedNode(
        bus_id=dn.id,
        demand=tuple(float(d) for d in demand),
        pv_available=tuple(float(a * pv_ratio) for a in cfg.pv_availability_dn),
        battery=lumped_battery(dn),
    )


def _zero_fixing(
    tn: TransmissionNetwork, attached: Sequence[int], horizon: int
) -> Dict[Tuple[str, int], List[float]]:
    """Exchanges of boundary buses without an ADN stay at zero"""
    return {
        (kind, bus_id): [0.0] * horizon
        for bus_id in tn.boundary_bus_ids
        if bus_id not in attached
        for kind in (PK_BG, PK_SGC, PK_SGE)
    }


def allocate_cheap_energy(
    kappa: np.ndarray, pv_pool: np.ndarray, system_demand: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(cheap purchase, expensive purchase, sale) from a net import series;
    PV energy goes pro rata to all demand"""
    share = np.divide(
        pv_pool, system_demand, out=np.zeros_like(pv_pool), where=system_demand > 0
    )
    share = np.minimum(share, 1.0)
    imports = np.maximum(kappa, 0.0)
    cheap = imports * share
    return cheap, imports - cheap, np.maximum(-kappa, 0.0)


def run_tso_first(
    scenario: Scenario, settings: Optional[SolveSettings] = None
) -> ExperimentResult:
    """TSO dispatches first against aggregated ADN nodes; each ADN then follows the
    resulting exchanges"""
    settings = settings or SolveSettings()
    tn, adns, cfg = scenario
    start_time = time.monotonic()
    attached = [dn.id for dn in adns]

    # Stage 1
    reports: List[BnbReport] = []
    aggregated = {}
    for dn in adns:
        passive = solve_adn(build_adn_program(strip_ders(dn), cfg), settings, reports)
        aggregated[dn.id] = aggregate_adn(dn, cfg, passive.losses())

    stage1 = build_tn_program(
        tn, cfg, boundary_fixing=_zero_fixing(tn, attached, cfg.horizon), aggregated=aggregated
    )
    try:
        report = _solve(stage1, settings)
    except (Infeasible, NotSolved) as e:
        raise StageInfeasible(1, None, str(e)) from e

    assert report.x is not None
    reports.append(report)
    tn1 = TnSolution(prog=stage1, x=report.x, objective=report.objective)
    pv_pool = np.zeros(cfg.horizon)
    for (_bus_id, t), value in tn1.values(PV).items():
        pv_pool[t] += value

    system_demand = np.asarray(scenario.system_demand(), dtype=float)
    stage1_seconds = time.monotonic() - start_time
    _LOGGER.info("TSO-first stage 1 solved in %.2fs", stage1_seconds)

    # Stage 2
    sols = []
    fallbacks = []
    for dn in adns:
        node = aggregated[dn.id]
        kappa = np.array(
            [
                node.demand[t]
                + tn1.value(AGG_CH, (dn.id, t))
                - tn1.value(AGG_DS, (dn.id, t))
                - tn1.value(AGG_PV, (dn.id, t))
                for t in cfg.periods
            ]
        )
        cheap, expensive, sale = allocate_cheap_energy(kappa, pv_pool, system_demand)
        root = dn.root_bus_id
        fixed = {
            (DN_PK_BGC, root): [float(v) for v in cheap],
            (DN_PK_BGE, root): [float(v) for v in expensive],
            (DN_PK_SG, root): [float(v) for v in sale],
        }

        try:
            sols.append(
                solve_adn(build_adn_program(dn, cfg, fixed_exchanges=fixed), settings, reports)
            )
            continue
        except (Infeasible, NotSolved) as e:
            _LOGGER.warning(
                "ADN %s infeasible with the stage-1 exchanges, relaxing them: %s", dn.id, e
            )

        try:
            sol = solve_adn(
                build_adn_program(dn, cfg, fixed_exchanges=fixed, elastic=True),
                settings,
                reports,
            )
        except (Infeasible, NotSolved) as e:
            raise StageInfeasible(2, dn.id, str(e)) from e

        _LOGGER.warning("ADN %s: elastic exchange deviation %.6g MW", dn.id, sol.elastic_slack())
        fallbacks.append(dn.id)
        sols.append(sol)

    # TN dispatch at the realized exchanges
    fixing = _zero_fixing(tn, attached, cfg.horizon)
    for sol in sols:
        realized = sol.exchanges()
        fixing[(PK_BG, sol.dn.id)] = [float(v) for v in realized[DN_PK_SG]]
        fixing[(PK_SGC, sol.dn.id)] = [float(v) for v in realized[DN_PK_BGC]]
        fixing[(PK_SGE, sol.dn.id)] = [float(v) for v in realized[DN_PK_BGE]]

    try:
        tn_sol = solve_tn_direct(
            build_tn_program(tn, cfg, boundary_fixing=fixing), solver=settings.solver
        )
    except (Infeasible, NotSolved) as e:
        raise StageInfeasible(2, None, f"TN dispatch at the realized exchanges: {e}") from e

    stats: Dict[str, Any] = {
        **fold_reports(reports),
        "stage1_seconds": stage1_seconds,
        "stage1_objective": report.objective,
        "wall_seconds": time.monotonic() - start_time,
        "fallback_adns": fallbacks,
    }
    result = _result(scenario, DecisionSequence.TSO_FIRST, sols, tn_sol, stats)
    _LOGGER.info("TSO-first: total DSO cost %.6g", result.total_cost)

    return result


def run_sequence(
    scenario: Scenario, settings: Optional[SolveSettings] = None
) -> ExperimentResult:
    if scenario.cfg.decision_sequence == DecisionSequence.TSO_FIRST:
        return run_tso_first(scenario, settings)

    return run_dso_first(scenario, settings)


def equal_price_scenario(scenario: Scenario) -> Scenario:
    """Thermal energy priced like PV energy"""
    return replace(scenario, cfg=scenario.cfg.with_prices(price_bge=scenario.cfg.price_bgc))


@dataclass
class SequenceComparison:
    dso_first: ExperimentResult
    tso_first: ExperimentResult
    equal_prices: bool = False

    @property
    def cost_increase(self) -> float:
        """Percent increase of the total DSO cost under TSO-first"""
        base = self.dso_first.total_cost
        return 100.0 * (self.tso_first.total_cost - base) / max(abs(base), 1e-9)

    def to_frame(self) -> pd.DataFrame:
        dso = compute_metrics(self.dso_first)
        tso = compute_metrics(self.tso_first)
        records = []
        for adn_id in self.dso_first.adn_ids:
            records.append(
                (
                    adn_id,
                    self.dso_first.adn_costs[adn_id],
                    self.tso_first.adn_costs[adn_id],
                    dso.soc_to_load[adn_id],
                    tso.soc_to_load[adn_id],
                    dso.p2p_to_load[adn_id],
                    tso.p2p_to_load[adn_id],
                )
            )

        return pd.DataFrame.from_records(
            records,
            columns=[
                "adn",
                "cost_dso_first",
                "cost_tso_first",
                "soc_to_load_dso_first",
                "soc_to_load_tso_first",
                "p2p_to_load_dso_first",
                "p2p_to_load_tso_first",
            ],
        )


def compare_sequences(
    scenario: Scenario,
    settings: Optional[SolveSettings] = None,
    equal_prices: bool = False,
) -> SequenceComparison:
    if equal_prices:
        scenario = equal_price_scenario(scenario)

    comparison = SequenceComparison(
        dso_first=run_dso_first(scenario, settings),
        tso_first=run_tso_first(scenario, settings),
        equal_prices=equal_prices,
    )
    _LOGGER.info("TSO-first raises the DSO cost by %.3f%%", comparison.cost_increase)

    return comparison


# -----------------------------------------------------------------------------


def _map(func: Callable[[Any], Any], items: Sequence[Any], workers: int) -> List[Any]:
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


@dataclass
class CompetitionTable:
    single: Dict[int, ExperimentResult]
    """ADN id -> run with that ADN alone"""

    full: ExperimentResult

    def deltas(self) -> pd.DataFrame:
        """Full minus Single TSO sales of cheap and expensive energy per ADN and period"""
        records = []
        for adn_id, alone in sorted(self.single.items()):
            for t in range(self.full.horizon):
                records.append(
                    (
                        adn_id,
                        t,
                        float(
                            self.full.exchanges[adn_id][DN_PK_BGC][t]
                            - alone.exchanges[adn_id][DN_PK_BGC][t]
                        ),
                        float(
                            self.full.exchanges[adn_id][DN_PK_BGE][t]
                            - alone.exchanges[adn_id][DN_PK_BGE][t]
                        ),
                    )
                )

        return pd.DataFrame.from_records(
            records, columns=["adn", "t", "delta_sgc", "delta_sge"]
        )

    def costs(self) -> pd.DataFrame:
        ids = sorted(self.single)
        return pd.DataFrame(
            {
                "adn": ids,
                "cost_single": [self.single[k].adn_costs[k] for k in ids],
                "cost_full": [self.full.adn_costs[k] for k in ids],
            }
        )


def run_competition(
    scenario: Scenario, settings: Optional[SolveSettings] = None
) -> CompetitionTable:
    """Each ADN alone against the TN, then all ADNs together"""
    settings = settings or SolveSettings()
    if len(scenario.adns) < 2:
        raise ValueError("Competition needs at least two ADNs")

    def alone(dn: DistributionNetwork) -> ExperimentResult:
        return run_dso_first(Scenario(scenario.tn, (dn,), scenario.cfg), settings)

    singles = _map(alone, list(scenario.adns), settings.workers)
    return CompetitionTable(
        single={dn.id: result for dn, result in zip(scenario.adns, singles)},
        full=run_dso_first(scenario, settings),
    )


def passive_scenario(scenario: Scenario) -> Scenario:
    return replace(scenario, adns=tuple(strip_ders(dn) for dn in scenario.adns))


def flow_reduction(passive: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Percent drop of |flow| per (line, t); 0 where the passive flow vanishes"""
    base = np.abs(passive)
    delta = np.zeros_like(base)
    mask = base >= _FLOW_EPS
    delta[mask] = 100.0 * (base[mask] - np.abs(active)[mask]) / base[mask]
    return delta


@dataclass
class CongestionTable:
    passive: ExperimentResult
    full: ExperimentResult

    @property
    def reductions(self) -> np.ndarray:
        return flow_reduction(self.passive.flows, self.full.flows)

    def to_frame(self) -> pd.DataFrame:
        lines = [f"{a}-{b}" for a, b in self.full.lines]
        frame = pd.DataFrame(self.reductions, columns=[f"t{t}" for t in range(self.full.horizon)])
        frame.insert(0, "line", lines)
        return frame

    def long_frame(self) -> pd.DataFrame:
        return long_frame(
            {f"{a}-{b}": self.reductions[k] for k, (a, b) in enumerate(self.full.lines)}
        )


def run_congestion_study(
    scenario: Scenario, settings: Optional[SolveSettings] = None
) -> CongestionTable:
    """ADNs as passive loads against ADNs with their DERs"""
    settings = settings or SolveSettings()
    passive, full = _map(
        lambda s: run_dso_first(s, settings),
        [passive_scenario(scenario), scenario],
        settings.workers,
    )
    return CongestionTable(passive=passive, full=full)


# -----------------------------------------------------------------------------


def replicate_scenario(scenario: Scenario, count: int) -> Scenario:
    """Scenario with count ADNs; beyond the original ones the ADNs are copied cyclically
    onto load-only TN buses, which become boundary buses and shed their demand"""
    tn, adns, cfg = scenario
    if count < 0:
        raise ValueError(f"Unexpected ADN count: {count}")

    if count <= len(adns):
        return Scenario(tn, tuple(adns[:count]), cfg)

    if not adns:
        raise ValueError("No ADN to replicate")

    excluded = set(tn.boundary_bus_ids) | set(tn.reference_bus_ids)
    candidates = [
        bus.id
        for bus in sorted(tn.buses, key=lambda b: b.id)
        if bus.id not in excluded and not bus.has_generation and not bus.has_pv
    ]
    extra = count - len(adns)
    if extra > len(candidates):
        raise ValueError(f"Only {len(candidates)} bus(es) can take another ADN, {extra} needed")

    new_adns = list(adns)
    attached: Dict[int, TnBus] = {}
    for k, bus_id in enumerate(candidates[:extra]):
        source = adns[k % len(adns)]
        attached[bus_id] = replace(
            tn.bus(bus_id),
            demand=tuple(0.0 for _ in range(cfg.horizon)),
            kt_bg_limit=tn.bus(source.id).kt_bg_limit,
        )
        new_adns.append(replace(source, id=bus_id))

    new_tn = replace(
        tn,
        buses=tuple(attached.get(bus.id, bus) for bus in tn.buses),
        boundary_bus_ids=tuple(sorted(set(tn.boundary_bus_ids) | set(attached))),
    )
    return Scenario(new_tn, tuple(new_adns), cfg)


@dataclass(frozen=True)
class ScalingRow:
    count: int
    variables: int
    constraints: int
    binaries: int
    seconds: float = float("nan")
    gap: float = float("nan")
    status: str = "not_solved"


@dataclass
class ScalingTable:
    rows: List[ScalingRow]

    @property
    def exponent(self) -> float:
        """Fitted b of seconds = a * variables^b"""
        return fit_power_law(
            [row.variables for row in self.rows], [row.seconds for row in self.rows]
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(
            [
                (r.count, r.variables, r.constraints, r.binaries, r.seconds, r.gap, r.status)
                for r in self.rows
            ],
            columns=["adns", "variables", "constraints", "binaries", "seconds", "gap", "status"],
        )


def scaling_row(
    scenario: Scenario, count: int, settings: SolveSettings, solve: bool = True
) -> ScalingRow:
    replicated = replicate_scenario(scenario, count)
    tn, adns, cfg = replicated
    tn_prog = build_tn_program(tn, cfg)
    model = assemble_single_level(
        tn_prog,
        [build_adn_program(dn, cfg) for dn in adns],
        derive_kkt(tn_prog),
        cfg,
        solver=settings.solver,
    )
    size = model.size()
    row = ScalingRow(count, size.variables, size.constraints, size.binaries)
    if not solve:
        return row

    start_time = time.monotonic()
    try:
        report = solve_model(model, settings.engine, settings.solver, settings.opts)
    except LimitReached as e:
        report = e.report

    seconds = time.monotonic() - start_time
    _LOGGER.info(
        "%s ADN(s): %s variable(s), %s binary(ies), %.2fs (%s)",
        count,
        size.variables,
        size.binaries,
        seconds,
        report.status.value,
    )

    return replace(row, seconds=seconds, gap=report.gap, status=report.status.value)


def run_scaling_study(
    scenario: Scenario,
    adn_counts: Sequence[int],
    settings: Optional[SolveSettings] = None,
    solve: bool = True,
) -> ScalingTable:
    settings = settings or SolveSettings()
    rows = _map(
        lambda count: scaling_row(scenario, count, settings, solve=solve),
        list(adn_counts),
        settings.workers,
    )
    table = ScalingTable(rows=rows)
    if solve:
        _LOGGER.info("Fitted runtime exponent %.3f", table.exponent)

    return table


# -----------------------------------------------------------------------------


@dataclass
class MetricsBundle:
    soc_to_load: Dict[int, float]
    """Summed state of charge over summed load energy, percent"""

    p2p_to_load: Dict[int, float]
    inter_adn_share: np.ndarray
    """Per period energy moved between ADNs through the TN, percent of system demand"""

    total_dso_cost: float
    flow_reduction: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        records = []
        for adn_id in sorted(self.soc_to_load):
            records.append(("soc_to_load", str(adn_id), self.soc_to_load[adn_id]))
            records.append(("p2p_to_load", str(adn_id), self.p2p_to_load[adn_id]))

        for t, value in enumerate(self.inter_adn_share):
            records.append(("inter_adn_share", str(t), float(value)))

        records.append(("total_dso_cost", "", self.total_dso_cost))
        return pd.DataFrame.from_records(records, columns=["metric", "key", "value"])


def compute_metrics(
    result: ExperimentResult, baseline: Optional[ExperimentResult] = None
) -> MetricsBundle:
    dt = result.step_hours
    soc_to_load = {}
    p2p_to_load = {}
    for adn_id in result.adn_ids:
        load = float(np.sum(result.demand[adn_id]) * dt)
        soc_to_load[adn_id] = 100.0 * float(np.sum(result.soc[adn_id])) / load if load > 0 else 0.0
        p2p_to_load[adn_id] = 100.0 * result.p2p_energy[adn_id] / load if load > 0 else 0.0

    sales = np.zeros(result.horizon)
    purchases = np.zeros(result.horizon)
    for adn_id in result.adn_ids:
        exchanges = result.exchanges[adn_id]
        sales += exchanges[DN_PK_SG]
        purchases += exchanges[DN_PK_BGC] + exchanges[DN_PK_BGE]

    demand = result.system_demand
    share = np.divide(
        100.0 * np.minimum(sales, purchases),
        demand,
        out=np.zeros(result.horizon),
        where=demand > 0,
    )

    return MetricsBundle(
        soc_to_load=soc_to_load,
        p2p_to_load=p2p_to_load,
        inter_adn_share=share,
        total_dso_cost=result.total_cost,
        flow_reduction=None if baseline is None else flow_reduction(baseline.flows, result.flows),
    )
