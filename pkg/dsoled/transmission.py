"""Transmission DC optimal power flow"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix, hstack, identity

from .config import ScenarioConfig
from .conic import ConicSubproblemSolver, CvxpySolver, SubproblemResult
from .const import (
    AGG_BALANCE,
    AGG_PV_CAP,
    BALANCE_BOUNDARY,
    BALANCE_INTERIOR,
    BG_CAP,
    FLOW,
    FLOW_DEF,
    FLOW_LB,
    FLOW_UB,
    PG,
    PG_UB,
    PK_BG,
    PK_SGC,
    PK_SGE,
    PV,
    PV_UB,
    REF_ANGLE,
    SGC_POOL,
    SGE_POOL,
    THETA,
)
from .network import BessSpec, TransmissionNetwork
from .program import INF, CanonicalConvexProgram, ProgramBuilder, RowTag, VariableInfo

_LOGGER = logging.getLogger(__name__)

OWNER = "tn"

# Aggregated ADN node variables (sequence baseline, stage 1)
AGG_PV = "agg_pv"
AGG_CH = "agg_ch"
AGG_DS = "agg_ds"
AGG_SOC = "agg_soc"
AGG_W = "agg_w"

BoundaryFixing = Mapping[Tuple[str, int], Sequence[float]]


class Infeasible(Exception):
    def __init__(self, report: "InfeasibilityReport") -> None:
        super().__init__(
            f"Infeasible: total violation {report.total_violation:.6g} "
            f"on {len(report.violated_rows)} row(s)"
        )
        self.report = report


class Unbounded(Exception):
    pass


class NotSolved(Exception):
    pass


@dataclass(frozen=True)
class InfeasibilityReport:
    """Elastic phase-one certificate: min sum of row violations is positive"""

    total_violation: float
    violated_rows: Tuple[Tuple[str, float], ...]


@dataclass(frozen=True)
class AggregatedNode:
    """An ADN collapsed onto its boundary bus"""

    bus_id: int
    demand: Tuple[float, ...]
    """Total ADN demand plus estimated losses, MW"""

    pv_available: Tuple[float, ...]
    """Aggregated PV availability, MW"""

    battery: Optional[BessSpec] = None
    """Lumped battery (summed capacity and power, same efficiencies)"""


def build_tn_program(
    tn: TransmissionNetwork,
    cfg: ScenarioConfig,
    boundary_fixing: Optional[BoundaryFixing] = None,
    aggregated: Optional[Mapping[int, AggregatedNode]] = None,
    leader_bounds: Optional[Mapping[Tuple[str, int], float]] = None,
) -> CanonicalConvexProgram:
    """TSO problem in canonical form.

    Args:
        boundary_fixing: (kind, bus) -> per-period values fixing pk variables
        aggregated: boundary buses replaced by an aggregated ADN node
        leader_bounds: (kind, bus) -> upper bound on pk variables

    Returns:
        program with owner "tn" and meta {"step_hours", "horizon"}
    """
    boundary_fixing = boundary_fixing or {}
    aggregated = aggregated or {}
    leader_bounds = leader_bounds or {}
    builder = ProgramBuilder()
    dt = cfg.step_hours
    boundary = set(tn.boundary_bus_ids)

    for bus in tn.buses:
        if (bus.id in boundary) and (
            bus.has_generation or bus.has_pv or any(d > 0 for d in bus.demand)
        ):
            raise ValueError(f"Boundary bus {bus.id} hosts generation or demand")

    pg: Dict[Tuple[int, int], int] = {}
    pv: Dict[Tuple[int, int], int] = {}
    pk: Dict[Tuple[str, int, int], int] = {}
    theta: Dict[Tuple[int, int], int] = {}
    flow: Dict[Tuple[int, int], int] = {}
    agg: Dict[Tuple[str, int, int], int] = {}

    for t in cfg.periods:
        for bus in tn.buses:
            if bus.id in aggregated:
                node = aggregated[bus.id]
                agg[(AGG_PV, bus.id, t)] = builder.add_variable(AGG_PV, (bus.id, t), OWNER)
                if node.battery is not None:
                    for kind in (AGG_CH, AGG_DS, AGG_SOC):
                        agg[(kind, bus.id, t)] = builder.add_variable(
                            kind, (bus.id, t), OWNER
                        )

                    agg[(AGG_W, bus.id, t)] = builder.add_variable(
                        AGG_W, (bus.id, t), OWNER, lb=0.0, ub=1.0, binary=True
                    )
            elif bus.id in boundary:
                for kind in (PK_BG, PK_SGC, PK_SGE):
                    fixed = boundary_fixing.get((kind, bus.id))
                    if fixed is not None:
                        lb = ub = float(fixed[t])
                    else:
                        lb, ub = 0.0, leader_bounds.get((kind, bus.id), INF)

                    pk[(kind, bus.id, t)] = builder.add_variable(
                        kind, (bus.id, t), OWNER, lb=lb, ub=ub
                    )
            else:
                if bus.has_generation:
                    pg[(bus.id, t)] = builder.add_variable(PG, (bus.id, t), OWNER)

                if bus.has_pv:
                    pv[(bus.id, t)] = builder.add_variable(PV, (bus.id, t), OWNER)

        for bus in tn.buses:
            theta[(bus.id, t)] = builder.add_variable(
                THETA, (bus.id, t), OWNER, lb=-INF, ub=INF
            )

        for k, line in enumerate(tn.lines):
            flow[(k, t)] = builder.add_variable(
                FLOW, (line.from_bus, line.to_bus, t), OWNER, lb=-INF, ub=INF
            )

    # Objective
    for (bus_id, t), var in pg.items():
        ca, cb, cc = tn.bus(bus_id).gen_cost
        builder.add_quadratic(var, 2.0 * ca * dt)
        builder.add_linear(var, cb * dt)
        builder.constant += cc * dt

    for (bus_id, t), var in pv.items():
        builder.add_linear(var, tn.bus(bus_id).pv_marginal_cost * dt)

    # Equalities
    for t in cfg.periods:
        for bus in tn.buses:
            coeffs: Dict[int, float] = {}
            for k, line in enumerate(tn.lines):
                if line.from_bus == bus.id:
                    coeffs[flow[(k, t)]] = coeffs.get(flow[(k, t)], 0.0) + 1.0
                elif line.to_bus == bus.id:
                    coeffs[flow[(k, t)]] = coeffs.get(flow[(k, t)], 0.0) - 1.0

            if bus.id in aggregated:
                node = aggregated[bus.id]
                coeffs[agg[(AGG_PV, bus.id, t)]] = -1.0
                if node.battery is not None:
                    coeffs[agg[(AGG_DS, bus.id, t)]] = -1.0
                    coeffs[agg[(AGG_CH, bus.id, t)]] = 1.0

                builder.add_eq(
                    coeffs, -node.demand[t], RowTag(AGG_BALANCE, (bus.id, t), OWNER)
                )
            elif bus.id in boundary:
                coeffs[pk[(PK_BG, bus.id, t)]] = -1.0
                coeffs[pk[(PK_SGC, bus.id, t)]] = 1.0
                coeffs[pk[(PK_SGE, bus.id, t)]] = 1.0
                builder.add_eq(coeffs, 0.0, RowTag(BALANCE_BOUNDARY, (bus.id, t), OWNER))
            else:
                if (bus.id, t) in pg:
                    coeffs[pg[(bus.id, t)]] = -1.0

                if (bus.id, t) in pv:
                    coeffs[pv[(bus.id, t)]] = -1.0

                builder.add_eq(
                    coeffs, -bus.demand[t], RowTag(BALANCE_INTERIOR, (bus.id, t), OWNER)
                )

        for k, line in enumerate(tn.lines):
            builder.add_eq(
                {
                    flow[(k, t)]: line.reactance / tn.base_mva,
                    theta[(line.from_bus, t)]: -1.0,
                    theta[(line.to_bus, t)]: 1.0,
                },
                0.0,
                RowTag(FLOW_DEF, (line.from_bus, line.to_bus, t), OWNER),
            )

        for bus_id in tn.reference_bus_ids:
            builder.add_eq(
                {theta[(bus_id, t)]: 1.0}, 0.0, RowTag(REF_ANGLE, (bus_id, t), OWNER)
            )

    # Inequalities
    for t in cfg.periods:
        for k, line in enumerate(tn.lines):
            index = (line.from_bus, line.to_bus, t)
            builder.add_le(
                {flow[(k, t)]: 1.0}, line.flow_limit, RowTag(FLOW_UB, index, OWNER)
            )
            builder.add_le(
                {flow[(k, t)]: -1.0}, line.flow_limit, RowTag(FLOW_LB, index, OWNER)
            )

        for bus in tn.buses:
            if (bus.id, t) in pg:
                builder.add_le(
                    {pg[(bus.id, t)]: 1.0},
                    bus.pg_max[t],
                    RowTag(PG_UB, (bus.id, t), OWNER),
                )

            if (bus.id, t) in pv:
                builder.add_le(
                    {pv[(bus.id, t)]: 1.0},
                    cfg.pv_availability_tn[t] * bus.pv_capacity_ratio,
                    RowTag(PV_UB, (bus.id, t), OWNER),
                )

        pk_buses = [b for b in tn.boundary_bus_ids if b not in aggregated]
        if pk_buses:
            coeffs = {pk[(PK_SGC, b, t)]: 1.0 for b in pk_buses}
            for (bus_id, tt), var in pv.items():
                if tt == t:
                    coeffs[var] = -1.0

            builder.add_le(coeffs, 0.0, RowTag(SGC_POOL, (t,), OWNER))

            coeffs = {pk[(PK_SGE, b, t)]: 1.0 for b in pk_buses}
            for (bus_id, tt), var in pg.items():
                if tt == t:
                    coeffs[var] = -1.0

            builder.add_le(coeffs, 0.0, RowTag(SGE_POOL, (t,), OWNER))

            for b in pk_buses:
                builder.add_le(
                    {pk[(PK_BG, b, t)]: 1.0},
                    tn.bus(b).kt_bg_limit,
                    RowTag(BG_CAP, (b, t), OWNER),
                )

        for bus_id, node in aggregated.items():
            builder.add_le(
                {agg[(AGG_PV, bus_id, t)]: 1.0},
                node.pv_available[t],
                RowTag(AGG_PV_CAP, (bus_id, t), OWNER),
            )

    for bus_id, node in aggregated.items():
        if node.battery is not None:
            _add_lumped_battery(builder, agg, bus_id, node.battery, cfg)

    prog = builder.build(meta={"step_hours": cfg.step_hours, "horizon": cfg.horizon})
    _LOGGER.debug(
        "TN program: %s variable(s), %s row(s) over %s period(s)",
        prog.n_vars,
        prog.n_constraints,
        cfg.horizon,
    )

    return prog


def _add_lumped_battery(
    builder: ProgramBuilder,
    agg: Dict[Tuple[str, int, int], int],
    bus_id: int,
    bess: BessSpec,
    cfg: ScenarioConfig,
) -> None:
    dt = cfg.step_hours
    for t in cfg.periods:
        soc, ch, ds, w = (agg[(kind, bus_id, t)] for kind in (AGG_SOC, AGG_CH, AGG_DS, AGG_W))
        coeffs = {soc: 1.0, ch: -bess.eff_charge * dt, ds: dt / bess.eff_discharge}
        if t == 0:
            builder.add_eq(coeffs, bess.soc_initial, RowTag("soc_anchor", (bus_id, t), OWNER))
        else:
            coeffs[agg[(AGG_SOC, bus_id, t - 1)]] = -1.0
            builder.add_eq(coeffs, 0.0, RowTag("soc_recursion", (bus_id, t), OWNER))

        builder.add_le(
            {soc: 1.0}, bess.soc_max * bess.capacity, RowTag("soc_max", (bus_id, t), OWNER)
        )
        builder.add_le(
            {soc: -1.0}, -bess.soc_min * bess.capacity, RowTag("soc_min", (bus_id, t), OWNER)
        )
        builder.add_le(
            {ch: 1.0, w: -bess.rated_power}, 0.0, RowTag("charge_gate", (bus_id, t), OWNER)
        )
        nu = 1.0 if bess.installed else 0.0
        builder.add_le(
            {ds: 1.0, w: bess.rated_power},
            bess.rated_power * nu,
            RowTag("discharge_gate", (bus_id, t), OWNER),
        )


# -----------------------------------------------------------------------------


@dataclass
class TnSolution:
    prog: CanonicalConvexProgram
    x: np.ndarray
    objective: float
    eq_duals: Optional[np.ndarray] = None
    ineq_duals: Optional[np.ndarray] = None
    lb_duals: Optional[np.ndarray] = None
    ub_duals: Optional[np.ndarray] = None
    primal_residual: float = 0.0
    stationarity_residual: float = float("nan")
    complementarity_residual: float = float("nan")
    _eq_rows: Dict[Tuple[str, Tuple], int] = field(default_factory=dict, repr=False)
    _ineq_rows: Dict[Tuple[str, Tuple], int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._eq_rows = {(tag.family, tag.index): r for r, tag in enumerate(self.prog.eq_tags)}
        self._ineq_rows = {
            (tag.family, tag.index): r for r, tag in enumerate(self.prog.ineq_tags)
        }

    @property
    def has_duals(self) -> bool:
        return self.eq_duals is not None

    def value(self, kind: str, index: Tuple) -> float:
        var = self.prog.lookup(kind, index, OWNER)
        return 0.0 if var is None else float(self.x[var])

    def values(self, kind: str) -> Dict[Tuple, float]:
        return {
            self.prog.variables[i].index: float(self.x[i])
            for i in self.prog.indices_of(kind, OWNER)
        }

    def dual(self, family: str, index: Tuple) -> float:
        if not self.has_duals:
            raise NotSolved("Solution carries no duals")

        key = (family, tuple(index))
        if key in self._eq_rows:
            assert self.eq_duals is not None
            return float(self.eq_duals[self._eq_rows[key]])

        if key in self._ineq_rows:
            assert self.ineq_duals is not None
            return float(self.ineq_duals[self._ineq_rows[key]])

        raise KeyError(key)

    def max_abs_dual(self) -> float:
        if not self.has_duals:
            return 0.0

        parts = [
            np.abs(d)
            for d in (self.eq_duals, self.ineq_duals, self.lb_duals, self.ub_duals)
            if d is not None and d.size
        ]
        return float(max((p.max() for p in parts), default=0.0))

    def flow_matrix(self, tn: TransmissionNetwork) -> np.ndarray:
        """(line, t) flows in MW"""
        horizon = int(self.prog.meta["horizon"])
        flows = np.zeros((len(tn.lines), horizon))
        for k, line in enumerate(tn.lines):
            for t in range(horizon):
                flows[k, t] = self.value(FLOW, (line.from_bus, line.to_bus, t))

        return flows

    def generation_cost(self) -> float:
        """TSO objective at this point"""
        return self.prog.objective_value(self.x)


def kkt_residuals(
    prog: CanonicalConvexProgram, result: SubproblemResult
) -> Tuple[float, float, float]:
    """(primal, stationarity, complementarity) infinity norms"""
    assert result.x is not None
    x = result.x
    primal = prog.evaluate(x, integrality=False).max_violation
    grad = prog.q_diag * x + prog.c
    assert result.eq_duals is not None and result.ineq_duals is not None
    assert result.lb_duals is not None and result.ub_duals is not None
    grad = grad + prog.a_eq.T @ result.eq_duals + prog.g_ineq.T @ result.ineq_duals
    grad = grad - result.lb_duals + result.ub_duals
    stationarity = float(np.max(np.abs(grad), initial=0.0))

    products = [np.abs(result.ineq_duals * (prog.h_ineq - prog.g_ineq @ x))]
    finite_lb = np.isfinite(prog.lb)
    finite_ub = np.isfinite(prog.ub)
    products.append(np.abs(result.lb_duals[finite_lb] * (x - prog.lb)[finite_lb]))
    products.append(np.abs(result.ub_duals[finite_ub] * (prog.ub - x)[finite_ub]))
    complementarity = float(max((np.max(p, initial=0.0) for p in products), default=0.0))

    return primal, stationarity, complementarity


def solve_tn_direct(
    prog: CanonicalConvexProgram,
    tol: Optional[float] = None,
    solver: Optional[ConicSubproblemSolver] = None,
) -> TnSolution:
    """Solve the TSO problem directly, with duals in the registry convention"""
    assert not len(prog.binary_indices), "Direct solve of a program with binaries"
    if not prog.is_convex:
        raise ValueError("Unexpected negative quadratic coefficient")

    solver = solver or CvxpySolver()
    result = solver.solve(prog)
    if result.status == "infeasible":
        raise Infeasible(infeasibility_report(prog, solver))

    if result.status == "unbounded":
        raise Unbounded("TSO problem is unbounded")

    if not result.ok:
        raise NotSolved(f"Solver returned {result.status.value}")

    primal, stationarity, complementarity = kkt_residuals(prog, result)
    if (tol is not None) and (stationarity > tol):
        _LOGGER.warning("Stationarity residual %.3g above tolerance %.3g", stationarity, tol)

    _LOGGER.debug(
        "TN solved in %.3fs: objective %.6g, primal %.2g, stationarity %.2g",
        result.solve_seconds,
        result.objective,
        primal,
        stationarity,
    )

    assert result.x is not None
    return TnSolution(
        prog=prog,
        x=result.x,
        objective=result.objective,
        eq_duals=result.eq_duals,
        ineq_duals=result.ineq_duals,
        lb_duals=result.lb_duals,
        ub_duals=result.ub_duals,
        primal_residual=primal,
        stationarity_residual=stationarity,
        complementarity_residual=complementarity,
    )


def infeasibility_report(
    prog: CanonicalConvexProgram,
    solver: Optional[ConicSubproblemSolver] = None,
    threshold: float = 1e-7,
) -> InfeasibilityReport:
    """Minimize the total row violation; a positive optimum certifies infeasibility"""
    solver = solver or CvxpySolver()
    phase_one = _phase_one(prog)
    result = solver.solve(phase_one)
    if not result.ok or result.x is None:
        return InfeasibilityReport(float("inf"), ())

    n = prog.n_vars
    elastic = result.x[n:]
    tags = [str(t) for t in prog.eq_tags] * 2 + [str(t) for t in prog.ineq_tags]
    by_row: Dict[str, float] = {}
    for tag, value in zip(tags, elastic):
        if value > threshold:
            by_row[tag] = by_row.get(tag, 0.0) + float(value)

    violated = tuple(sorted(by_row.items(), key=lambda item: -item[1]))
    return InfeasibilityReport(float(np.sum(elastic)), violated)


def _phase_one(prog: CanonicalConvexProgram) -> CanonicalConvexProgram:
    n_eq, n_ineq = prog.n_eq, prog.n_ineq
    n_elastic = 2 * n_eq + n_ineq
    eye_eq = identity(n_eq, format="csr")
    eye_ineq = identity(n_ineq, format="csr")

    a_eq = hstack([prog.a_eq, eye_eq, -eye_eq, csr_matrix((n_eq, n_ineq))]).tocsr()
    g_ineq = hstack([prog.g_ineq, csr_matrix((n_ineq, 2 * n_eq)), -eye_ineq]).tocsr()

    elastic_infos = tuple(
        VariableInfo(f"elastic[{k}]", "elastic", (k,), "phase_one")
        for k in range(n_elastic)
    )
    c = np.concatenate([np.zeros(prog.n_vars), np.ones(n_elastic)])
    return CanonicalConvexProgram(
        variables=prog.variables + elastic_infos,
        q_diag=np.zeros(prog.n_vars + n_elastic),
        c=c,
        constant=0.0,
        a_eq=a_eq,
        b_eq=prog.b_eq,
        eq_tags=prog.eq_tags,
        g_ineq=g_ineq,
        h_ineq=prog.h_ineq,
        ineq_tags=prog.ineq_tags,
        lb=np.concatenate([prog.lb, np.zeros(n_elastic)]),
        ub=np.concatenate([prog.ub, np.full(n_elastic, INF)]),
        cones=prog.cones,
    )


def marginal_cost_at(sol: Optional[TnSolution], bus: int, t: int) -> float:
    """Balance-row dual at (bus, t) in $/MWh"""
    if (sol is None) or (not sol.has_duals):
        raise NotSolved("Marginal cost needs an optimal solution with duals")

    dt = float(sol.prog.meta.get("step_hours", 1.0))
    for family in (BALANCE_INTERIOR, BALANCE_BOUNDARY, AGG_BALANCE):
        try:
            return sol.dual(family, (bus, t)) / dt
        except KeyError:
            continue

    raise ValueError(f"Unexpected bus/period: {bus}/{t}")


def thermal_marginal_costs(tn: TransmissionNetwork, sol: TnSolution) -> List[float]:
    """Per period, the highest 2*Ca*pg + Cb over dispatched thermal units"""
    horizon = int(sol.prog.meta["horizon"])
    costs = []
    for t in range(horizon):
        best = 0.0
        for (bus_id, tt), value in sol.values(PG).items():
            if tt != t or value <= 1e-6:
                continue

            ca, cb, _cc = tn.bus(bus_id).gen_cost
            best = max(best, 2.0 * ca * value + cb)

        costs.append(best)

    return costs
