"""Single-level reformulation: ADN programs + TSO optimality conditions + coupling"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import BigMMode, ScenarioConfig
from .conic import ConicSubproblemSolver, CvxpySolver
from .const import (
    ALPHA,
    COUPLING,
    COUPLING_FAMILY,
    DN_BATTERY_FAMILIES,
    DN_NETWORK_FAMILIES,
    DN_P2P_FAMILIES,
    DN_PV_FAMILIES,
    DN_W,
    DN_Y,
    DUAL_SIDE,
    FAMILY_COUPLING,
    FAMILY_DSO_BATTERY,
    FAMILY_DSO_NETWORK,
    FAMILY_DSO_P2P,
    FAMILY_DSO_PV,
    FAMILY_TSO_BIG_M,
    FAMILY_TSO_PRIMAL,
    FAMILY_TSO_STATIONARITY,
    FLOW,
    LEADER_KINDS,
    PG,
    PV,
    SINGLE_LEVEL_FAMILIES,
    SLACK_SIDE,
    STATIONARITY,
    THETA,
)
from .distribution import AdnProgram, AdnSolution
from .kkt import (
    OWNER as KKT_OWNER,
    BigM,
    KktSystem,
    LinearizedPairs,
    SaturationReport,
    big_m_linearize,
    certify_big_m,
    detect_big_m_saturation,
)
from .program import (
    CanonicalConvexProgram,
    ProgramBuilder,
    RowTag,
    propagate_bounds,
    row_activity_range,
)
from .transmission import OWNER as TN_OWNER
from .transmission import Infeasible, NotSolved, TnSolution, solve_tn_direct

_LOGGER = logging.getLogger(__name__)

FOLLOWER_KINDS = (PG, PV, THETA, FLOW)
COUPLING_OWNER = "dso"


class CouplingError(Exception):
    pass


def constraint_family(tag: RowTag) -> str:
    """Single-level constraint family of a row tag"""
    if tag.owner == TN_OWNER:
        return FAMILY_TSO_PRIMAL

    if tag.owner == KKT_OWNER:
        if tag.family == STATIONARITY:
            return FAMILY_TSO_STATIONARITY

        if tag.family in (SLACK_SIDE, DUAL_SIDE):
            return FAMILY_TSO_BIG_M

    if tag.family == COUPLING_FAMILY:
        return FAMILY_COUPLING

    if tag.family in DN_NETWORK_FAMILIES:
        return FAMILY_DSO_NETWORK

    if tag.family in DN_PV_FAMILIES:
        return FAMILY_DSO_PV

    if tag.family in DN_BATTERY_FAMILIES:
        return FAMILY_DSO_BATTERY

    if tag.family in DN_P2P_FAMILIES:
        return FAMILY_DSO_P2P

    raise ValueError(f"Unexpected row family: {tag}")


@dataclass(frozen=True)
class ModelSize:
    variables: int
    constraints: int
    binaries: int
    by_family: Dict[str, int]
    binaries_by_kind: Dict[str, int]

    def to_dict(self) -> Dict[str, object]:
        return {
            "variables": self.variables,
            "constraints": self.constraints,
            "binaries": self.binaries,
            "by_family": dict(self.by_family),
            "binaries_by_kind": dict(self.binaries_by_kind),
        }


@dataclass(frozen=True)
class SingleLevelModel:
    program: CanonicalConvexProgram
    tn_prog: CanonicalConvexProgram
    adn_progs: Tuple[AdnProgram, ...]
    kkt: KktSystem
    linearized: LinearizedPairs
    tn_columns: np.ndarray
    adn_columns: Tuple[np.ndarray, ...]
    dual_columns: np.ndarray
    alpha_columns: np.ndarray
    imposed: np.ndarray
    """TN variables whose stationarity row is part of the model"""

    cfg: ScenarioConfig

    def size(self) -> ModelSize:
        prog = self.program
        by_family = {family: 0 for family in SINGLE_LEVEL_FAMILIES}
        for tag in prog.eq_tags + prog.ineq_tags + prog.cones.tags:
            family = constraint_family(tag)
            by_family[family] += 1

        kinds: Dict[str, int] = {DN_W: 0, DN_Y: 0, ALPHA: 0}
        for i in prog.binary_indices:
            kind = prog.variables[i].kind
            kinds[kind] = kinds.get(kind, 0) + 1

        return ModelSize(
            variables=prog.n_vars,
            constraints=prog.n_constraints,
            binaries=len(prog.binary_indices),
            by_family=by_family,
            binaries_by_kind=kinds,
        )

    def solution(self, x: np.ndarray) -> "SingleLevelSolution":
        return SingleLevelSolution(self, np.asarray(x, dtype=float))


def _coupling_rows(
    builder: ProgramBuilder,
    tn_prog: CanonicalConvexProgram,
    tn_columns: np.ndarray,
    adn_progs: Sequence[AdnProgram],
    adn_columns: Sequence[np.ndarray],
    horizon: int,
) -> None:
    attached = {adn.dn.id: k for k, adn in enumerate(adn_progs)}
    tn_boundary = sorted(
        {info.index[0] for info in tn_prog.variables if info.kind in LEADER_KINDS}
    )
    for adn in adn_progs:
        if adn.dn.id not in tn_boundary:
            raise CouplingError(f"ADN {adn.dn.id} has no exchange variables in the TN")

        assert not adn.elastic, "Elastic ADN programs are not coupled"

    for bus in tn_boundary:
        for t in range(horizon):
            for dn_kind, tn_kind in COUPLING:
                tn_var = tn_prog.lookup(tn_kind, (bus, t), TN_OWNER)
                assert tn_var is not None
                coeffs = {int(tn_columns[tn_var]): 1.0}
                k = attached.get(bus)
                if k is not None:
                    adn = adn_progs[k]
                    for dn_bus in adn.dn.boundary_bus_ids:
                        local = adn.var(dn_kind, (dn_bus, t))
                        assert local is not None
                        coeffs[int(adn_columns[k][local])] = -1.0

                builder.add_eq(
                    coeffs, 0.0, RowTag(COUPLING_FAMILY, (dn_kind, bus, t), COUPLING_OWNER)
                )


def _dual_scale(
    tn_prog: CanonicalConvexProgram,
    ub: np.ndarray,
    solver: Optional[ConicSubproblemSolver],
) -> Optional[float]:
    """Largest |dual| of a direct TSO solve with exchanges capped by propagated bounds"""
    capped = tn_prog.ub.copy()
    for i, info in enumerate(tn_prog.variables):
        if info.kind in LEADER_KINDS and np.isfinite(ub[i]):
            capped[i] = min(capped[i], ub[i])

    try:
        sol = solve_tn_direct(tn_prog.with_bounds(tn_prog.lb, capped), solver=solver)
    except (Infeasible, NotSolved) as e:
        _LOGGER.warning("Dual scale unavailable, using the fallback Big-M: %s", e)
        return None

    return sol.max_abs_dual()


def assemble_single_level(
    tn_prog: CanonicalConvexProgram,
    adn_progs: Sequence[AdnProgram],
    kkt: KktSystem,
    cfg: ScenarioConfig,
    big_m: Optional[BigM] = None,
    solver: Optional[ConicSubproblemSolver] = None,
    couple: bool = True,
) -> SingleLevelModel:
    """DSO objectives over ADN rows, TSO primal rows, imposed stationarity,
    Big-M complementarity and boundary coupling.

    With couple=False no coupling rows are added and the exchange variables keep
    the bounds of tn_prog (fixed-exchange oracle models).
    """
    assert kkt.prog is tn_prog, "Optimality conditions of another program"

    builder = ProgramBuilder()
    tn_columns = builder.add_program(tn_prog, with_objective=False)
    adn_columns = tuple(builder.add_program(adn.prog) for adn in adn_progs)
    if couple:
        _coupling_rows(builder, tn_prog, tn_columns, adn_progs, adn_columns, cfg.horizon)

    # Bounds implied by primal rows and coupling, before any dual enters
    primal = builder.build()
    bounds = propagate_bounds(primal)
    if bounds.infeasible:
        _LOGGER.warning("Bound propagation reports an infeasible primal system")
        tn_lb, tn_ub = tn_prog.lb, tn_prog.ub
    else:
        tn_lb, tn_ub = bounds.lb[tn_columns], bounds.ub[tn_columns]

    dual_lb = kkt.dual_lower_bounds()
    dual_columns = np.array(
        [
            builder.add_variable(dual.kind, (dual.family,) + tuple(dual.index), KKT_OWNER, lb=dual_lb[k])
            for k, dual in enumerate(kkt.duals)
        ],
        dtype=int,
    )

    follower = np.array(
        [
            cfg.leader_stationarity or info.kind in FOLLOWER_KINDS
            for info in tn_prog.variables
        ],
        dtype=bool,
    )
    imposed_rows = np.flatnonzero(follower)
    builder.add_rows(
        kkt.stationarity[imposed_rows].tocoo(),
        np.concatenate([tn_columns, dual_columns]),
        kkt.stationarity_rhs[imposed_rows],
        [kkt.stationarity_tags[r] for r in imposed_rows],
        equality=True,
    )

    if big_m is None:
        if cfg.big_m_mode == BigMMode.UNIFORM:
            big_m = BigM.uniform(kkt.n_pairs, cfg.big_m_tso)
        else:
            scale = _dual_scale(tn_prog, tn_ub, solver)
            big_m = certify_big_m(kkt, cfg, tn_lb, tn_ub, dual_scale=scale)

    linearized = big_m_linearize(kkt, big_m)

    # Pair rules: a multiplier absent from every imposed row is irrelevant (alpha = 0);
    # a row whose slack is zero on the whole box is always binding (alpha = 1)
    n = tn_prog.n_vars
    in_stationarity = np.zeros(kkt.n_duals, dtype=bool)
    used = kkt.stationarity[imposed_rows].tocoo()
    in_stationarity[used.col[(used.col >= n) & (used.data != 0)] - n] = True
    low, _high = row_activity_range(kkt.pair_g, tn_lb, tn_ub)
    always_binding = (kkt.pair_h - low) <= 1e-12

    alpha_columns = np.zeros(kkt.n_pairs, dtype=int)
    n_zero = n_one = 0
    for k, tag in enumerate(kkt.pair_tags):
        lb, ub = 0.0, 1.0
        if not in_stationarity[kkt.pair_dual[k]]:
            ub = 0.0
            n_zero += 1
        elif always_binding[k]:
            lb = 1.0
            n_one += 1

        alpha_columns[k] = builder.add_variable(
            ALPHA, (str(tag),), KKT_OWNER, lb=lb, ub=ub, binary=True
        )

    linearized.add_to(builder, tn_columns, dual_columns, alpha_columns)

    program = builder.build(
        meta={"step_hours": cfg.step_hours, "horizon": cfg.horizon}
    )
    model = SingleLevelModel(
        program=program,
        tn_prog=tn_prog,
        adn_progs=tuple(adn_progs),
        kkt=kkt,
        linearized=linearized,
        tn_columns=tn_columns,
        adn_columns=adn_columns,
        dual_columns=dual_columns,
        alpha_columns=alpha_columns,
        imposed=follower,
        cfg=cfg,
    )

    size = model.size()
    _LOGGER.debug(
        "Single-level model: %s variable(s), %s constraint(s), %s binary(ies) "
        "(%s alpha fixed to 0, %s to 1)",
        size.variables,
        size.constraints,
        size.binaries,
        n_zero,
        n_one,
    )

    return model


# -----------------------------------------------------------------------------


@dataclass
class SingleLevelSolution:
    model: SingleLevelModel
    x: np.ndarray
    objective: float = field(init=False)

    def __post_init__(self) -> None:
        self.objective = self.model.program.objective_value(self.x)

    @property
    def tn_x(self) -> np.ndarray:
        return self.x[self.model.tn_columns]

    @property
    def duals(self) -> np.ndarray:
        return self.x[self.model.dual_columns]

    @property
    def alphas(self) -> np.ndarray:
        return self.x[self.model.alpha_columns]

    def tn_solution(self) -> TnSolution:
        tn_prog = self.model.tn_prog
        return TnSolution(prog=tn_prog, x=self.tn_x, objective=tn_prog.objective_value(self.tn_x))

    def adn_solutions(self) -> List[AdnSolution]:
        return [
            AdnSolution(adn, self.x[columns])
            for adn, columns in zip(self.model.adn_progs, self.model.adn_columns)
        ]

    def tn_cost(self) -> float:
        """TSO generation cost of the projected point"""
        return self.model.tn_prog.objective_value(self.tn_x)

    def coupling_residual(self) -> float:
        prog = self.model.program
        rows = [r for r, tag in enumerate(prog.eq_tags) if tag.family == COUPLING_FAMILY]
        if not rows:
            return 0.0

        values = prog.a_eq[rows] @ self.x - prog.b_eq[rows]
        return float(np.max(np.abs(values)))

    def stationarity_residual(self) -> float:
        kkt = self.model.kkt
        residual = kkt.stationarity_residual(self.tn_x, self.duals)[self.model.imposed]
        return float(np.max(np.abs(residual), initial=0.0))

    def complementarity_residual(self) -> float:
        """max over relevant pairs of min(|slack|, |dual|)"""
        kkt = self.model.kkt
        relevant = self.alphas > 0.5
        relevant |= self.model.program.ub[self.model.alpha_columns] > 0.5
        if not np.any(relevant):
            return 0.0

        slack = np.abs(kkt.slacks(self.tn_x))[relevant]
        dual = np.abs(self.duals[kkt.pair_dual])[relevant]
        return float(np.max(np.minimum(slack, dual)))

    def saturation(self) -> SaturationReport:
        return detect_big_m_saturation(self.model.linearized, self.tn_x, self.duals)

    def exchange_fixing(self) -> Dict[Tuple[str, int], List[float]]:
        """(TN leader kind, bus) -> per-period values of the projected point"""
        tn_prog = self.model.tn_prog
        horizon = self.model.cfg.horizon
        fixing: Dict[Tuple[str, int], List[float]] = {}
        for i, info in enumerate(tn_prog.variables):
            if info.kind in LEADER_KINDS:
                bus, t = info.index
                fixing.setdefault((info.kind, bus), [0.0] * horizon)[t] = float(self.tn_x[i])

        return fixing


@dataclass(frozen=True)
class SoundnessReport:
    projected_cost: float
    direct_cost: float

    @property
    def relative_gap(self) -> float:
        return abs(self.projected_cost - self.direct_cost) / max(1.0, abs(self.direct_cost))

    def ok(self, rel_tol: float = 1e-6) -> bool:
        return self.relative_gap <= rel_tol


def check_kkt_soundness(
    solution: SingleLevelSolution,
    solver: Optional[ConicSubproblemSolver] = None,
) -> SoundnessReport:
    """Re-solve the TSO problem with the solution's exchanges fixed and compare costs"""
    tn_prog = solution.model.tn_prog
    x = solution.tn_x
    lb, ub = tn_prog.lb.copy(), tn_prog.ub.copy()
    for i, info in enumerate(tn_prog.variables):
        if info.kind in LEADER_KINDS:
            lb[i] = ub[i] = max(0.0, float(x[i]))

    direct = solve_tn_direct(tn_prog.with_bounds(lb, ub), solver=solver or CvxpySolver())
    report = SoundnessReport(projected_cost=solution.tn_cost(), direct_cost=direct.objective)
    if not report.ok():
        _LOGGER.warning(
            "TSO cost of the single-level point %.8g differs from the direct optimum %.8g",
            report.projected_cost,
            report.direct_cost,
        )

    return report


def active_set_fixing(
    model: SingleLevelModel, direct: TnSolution, tol: float = 1e-7
) -> Dict[int, float]:
    """alpha column -> 0/1 from the binding rows of a direct TSO solution

    A pair is binding when its multiplier outweighs its slack. Interior-point
    points leave slacks of 1e-6 on active rows, so a plain slack threshold
    misreads them. Without duals the slack threshold `tol` is used.
    """
    kkt = model.kkt
    slack = np.abs(kkt.slacks(direct.x))
    if direct.has_duals:
        duals = kkt.dual_vector(
            direct.eq_duals, direct.ineq_duals, direct.lb_duals, direct.ub_duals
        )
        binding = np.abs(duals[kkt.pair_dual]) > slack
    else:
        binding = slack <= tol * np.maximum(1.0, np.abs(kkt.pair_h))

    fixing: Dict[int, float] = {}
    for k, column in enumerate(model.alpha_columns):
        if model.program.ub[column] < 0.5:
            fixing[int(column)] = 0.0
        elif model.program.lb[column] > 0.5:
            fixing[int(column)] = 1.0
        else:
            fixing[int(column)] = 1.0 if binding[k] else 0.0

    return fixing


def solve_active_set(
    model: SingleLevelModel,
    direct: TnSolution,
    solver: Optional[ConicSubproblemSolver] = None,
) -> SingleLevelSolution:
    """Continuous single-level solve with alpha fixed to the direct active set"""
    assert not model.adn_progs, "Active-set oracle covers fixed-exchange models only"

    solver = solver or CvxpySolver()
    fixed = model.program.fix(active_set_fixing(model, direct))
    result = solver.solve(fixed)
    if not result.ok or result.x is None:
        raise NotSolved(f"Active-set model returned {result.status.value}")

    return model.solution(result.x)


def fixed_exchange_program(
    tn_prog: CanonicalConvexProgram, fixing: Mapping[Tuple[str, int], Sequence[float]]
) -> CanonicalConvexProgram:
    """Copy of tn_prog with the given exchange variables fixed"""
    lb, ub = tn_prog.lb.copy(), tn_prog.ub.copy()
    for i, info in enumerate(tn_prog.variables):
        values = fixing.get((info.kind, info.index[0])) if info.kind in LEADER_KINDS else None
        if values is not None:
            lb[i] = ub[i] = float(values[info.index[1]])

    return tn_prog.with_bounds(lb, ub)
