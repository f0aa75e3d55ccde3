"""Optimality conditions of the transmission problem and their Big-M linearization"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags, hstack, vstack

from .config import BigMMode, ScenarioConfig
from .const import (
    BALANCE_BOUNDARY,
    BALANCE_INTERIOR,
    BG_CAP,
    BIG_M_DUAL_FACTOR,
    BIG_M_DUAL_FLOOR,
    DUAL_SIDE,
    FLOW,
    FLOW_DEF,
    FLOW_LB,
    FLOW_UB,
    LAMBDA,
    LOWER_BOUND,
    MU,
    MULTIPLIER_SYMBOLS,
    NU,
    OMEGA,
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
    SLACK_SIDE,
    STATIONARITY,
    THETA,
    UPPER_BOUND,
)
from .network import TransmissionNetwork
from .program import INF, CanonicalConvexProgram, ProgramBuilder, RowTag, row_activity_range

_LOGGER = logging.getLogger(__name__)

OWNER = "kkt"


class NonConvex(Exception):
    pass


@dataclass(frozen=True)
class DualInfo:
    kind: str
    """lambda (free), mu, nu or omega (non-negative)"""

    family: str
    index: Tuple

    @property
    def nonnegative(self) -> bool:
        return self.kind != LAMBDA

    @property
    def symbol(self) -> str:
        """Name used by the reference audit"""
        if self.kind in (NU, OMEGA):
            return f"{self.kind}[{self.index[0]}]"

        base = MULTIPLIER_SYMBOLS.get(self.family, f"{self.kind}:{self.family}")
        return f"{base}[{','.join(str(i) for i in self.index)}]"


@dataclass(frozen=True)
class ComplementarityPair:
    tag: RowTag
    dual: int
    """Position in KktSystem.duals"""

    position: int
    """Row of KktSystem.pair_g"""


@dataclass(frozen=True)
class KktSystem:
    """Stationarity rows  Q x + c + A'lambda + G'mu - nu + omega = 0  over the
    columns [x, duals], and complementarity pairs  dual * (h - g x) = 0"""

    prog: CanonicalConvexProgram
    duals: Tuple[DualInfo, ...]
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    lb_duals: Dict[int, int]
    """variable -> dual position of its finite lower bound"""

    ub_duals: Dict[int, int]
    stationarity: csr_matrix
    stationarity_rhs: np.ndarray
    stationarity_tags: Tuple[RowTag, ...]
    pair_g: csr_matrix
    pair_h: np.ndarray
    pair_dual: np.ndarray
    pair_tags: Tuple[RowTag, ...]

    @property
    def n_duals(self) -> int:
        return len(self.duals)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_tags)

    @property
    def pairs(self) -> List[ComplementarityPair]:
        return [
            ComplementarityPair(tag, int(self.pair_dual[k]), k)
            for k, tag in enumerate(self.pair_tags)
        ]

    def dual_lower_bounds(self) -> np.ndarray:
        return np.array([0.0 if d.nonnegative else -INF for d in self.duals])

    def dual_vector(
        self,
        eq: np.ndarray,
        ineq: np.ndarray,
        lb: np.ndarray,
        ub: np.ndarray,
    ) -> np.ndarray:
        """Stack solver duals (registry convention) into the dual ordering"""
        values = np.zeros(self.n_duals)
        values[self.eq_duals] = eq
        values[self.ineq_duals] = ineq
        for var, position in self.lb_duals.items():
            values[position] = lb[var]

        for var, position in self.ub_duals.items():
            values[position] = ub[var]

        return values

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.pair_h - self.pair_g @ x

    def stationarity_residual(self, x: np.ndarray, duals: np.ndarray) -> np.ndarray:
        return self.stationarity @ np.concatenate([x, duals]) - self.stationarity_rhs

    def complementarity_residual(self, x: np.ndarray, duals: np.ndarray) -> float:
        """max over pairs of min(|slack|, |dual|)"""
        if not self.n_pairs:
            return 0.0

        slack = np.abs(self.slacks(x))
        dual = np.abs(duals[self.pair_dual])
        return float(np.max(np.minimum(slack, dual)))


def derive_kkt(prog: CanonicalConvexProgram) -> KktSystem:
    """Stationarity and complementarity generated from the program matrices"""
    if not prog.is_convex:
        raise NonConvex("Quadratic objective has a negative diagonal entry")

    assert not len(prog.binary_indices), "Optimality conditions of a program with binaries"
    assert not len(prog.cones), "Optimality conditions of a conic program"

    n = prog.n_vars
    duals: List[DualInfo] = []
    for tag in prog.eq_tags:
        duals.append(DualInfo(LAMBDA, tag.family, tag.index))

    for tag in prog.ineq_tags:
        duals.append(DualInfo(MU, tag.family, tag.index))

    lb_vars = np.flatnonzero(np.isfinite(prog.lb))
    ub_vars = np.flatnonzero(np.isfinite(prog.ub))
    lb_duals: Dict[int, int] = {}
    ub_duals: Dict[int, int] = {}
    for var in lb_vars:
        lb_duals[int(var)] = len(duals)
        duals.append(DualInfo(NU, LOWER_BOUND, (prog.variables[var].name,)))

    for var in ub_vars:
        ub_duals[int(var)] = len(duals)
        duals.append(DualInfo(OMEGA, UPPER_BOUND, (prog.variables[var].name,)))

    n_lb, n_ub = len(lb_vars), len(ub_vars)
    lb_select = coo_matrix(
        (np.ones(n_lb), (lb_vars, np.arange(n_lb))), shape=(n, n_lb)
    )
    ub_select = coo_matrix(
        (np.ones(n_ub), (ub_vars, np.arange(n_ub))), shape=(n, n_ub)
    )

    stationarity = hstack(
        [diags(prog.q_diag), prog.a_eq.T, prog.g_ineq.T, -lb_select, ub_select]
    ).tocsr()
    stationarity_tags = tuple(
        RowTag(STATIONARITY, (info.kind,) + tuple(info.index), OWNER)
        for info in prog.variables
    )

    # Pairs: G rows, then finite lower bounds (-x <= -lb), then upper bounds
    pair_g = vstack([prog.g_ineq, -lb_select.T, ub_select.T]).tocsr()
    pair_h = np.concatenate([prog.h_ineq, -prog.lb[lb_vars], prog.ub[ub_vars]])
    n_eq, n_ineq = prog.n_eq, prog.n_ineq
    pair_dual = np.concatenate(
        [
            n_eq + np.arange(n_ineq),
            np.array([lb_duals[int(v)] for v in lb_vars], dtype=int),
            np.array([ub_duals[int(v)] for v in ub_vars], dtype=int),
        ]
    ).astype(int)
    pair_tags = (
        tuple(prog.ineq_tags)
        + tuple(
            RowTag(LOWER_BOUND, (prog.variables[v].name,), OWNER) for v in lb_vars
        )
        + tuple(
            RowTag(UPPER_BOUND, (prog.variables[v].name,), OWNER) for v in ub_vars
        )
    )

    kkt = KktSystem(
        prog=prog,
        duals=tuple(duals),
        eq_duals=np.arange(n_eq),
        ineq_duals=n_eq + np.arange(n_ineq),
        lb_duals=lb_duals,
        ub_duals=ub_duals,
        stationarity=stationarity,
        stationarity_rhs=-prog.c,
        stationarity_tags=stationarity_tags,
        pair_g=pair_g,
        pair_h=pair_h,
        pair_dual=pair_dual,
        pair_tags=pair_tags,
    )

    _LOGGER.debug(
        "Derived optimality conditions: %s stationarity row(s), %s dual(s), %s pair(s)",
        n,
        kkt.n_duals,
        kkt.n_pairs,
    )

    return kkt


# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class BigM:
    slack: np.ndarray
    """Per pair bound on h - g x"""

    dual: np.ndarray
    """Per pair bound on the multiplier"""

    certified: np.ndarray
    """Slack constant proven from variable bounds"""

    @staticmethod
    def uniform(n_pairs: int, value: float) -> "BigM":
        assert value > 0, "Big-M must be positive"
        return BigM(
            slack=np.full(n_pairs, float(value)),
            dual=np.full(n_pairs, float(value)),
            certified=np.zeros(n_pairs, dtype=bool),
        )

    def shrunk(self, factor: float) -> "BigM":
        return BigM(self.slack * factor, self.dual * factor, np.zeros_like(self.certified))


def certify_big_m(
    kkt: KktSystem,
    cfg: ScenarioConfig,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    dual_scale: Optional[float] = None,
) -> BigM:
    """Per-pair constants: slack range from the bounds box, multiplier bound from
    the largest dual of a direct solve (10x, floored)"""
    n_pairs = kkt.n_pairs
    if cfg.big_m_mode == BigMMode.UNIFORM:
        return BigM.uniform(n_pairs, cfg.big_m_tso)

    lb = kkt.prog.lb if lb is None else lb
    ub = kkt.prog.ub if ub is None else ub
    low, _high = row_activity_range(kkt.pair_g, lb, ub)
    slack_max = kkt.pair_h - low
    certified = np.isfinite(slack_max)
    slack = np.where(
        certified, np.maximum(slack_max, 0.0) * (1.0 + 1e-6) + 1e-6, cfg.big_m_tso
    )

    if dual_scale is None:
        dual = np.full(n_pairs, cfg.big_m_tso)
    else:
        dual = np.full(n_pairs, max(BIG_M_DUAL_FLOOR, BIG_M_DUAL_FACTOR * dual_scale))

    _LOGGER.debug(
        "Big-M: %s/%s slack constant(s) certified, max slack M %.4g, dual M %.4g",
        int(np.sum(certified)),
        n_pairs,
        float(np.max(slack, initial=0.0)),
        float(np.max(dual, initial=0.0)),
    )

    return BigM(slack=slack, dual=dual, certified=certified)


@dataclass(frozen=True)
class LinearizedPairs:
    """slack <= M_s (1 - alpha),  dual <= M_d alpha,  alpha binary"""

    kkt: KktSystem
    big_m: BigM

    def add_to(
        self,
        builder: ProgramBuilder,
        x_cols: np.ndarray,
        dual_cols: np.ndarray,
        alpha_cols: np.ndarray,
    ) -> None:
        kkt = self.kkt
        n_pairs = kkt.n_pairs
        if not n_pairs:
            return

        m_slack, m_dual = self.big_m.slack, self.big_m.dual
        eye = coo_matrix((np.ones(n_pairs), (np.arange(n_pairs), np.arange(n_pairs))))

        # -g x + M_s alpha <= M_s - h
        slack_rows = hstack([-kkt.pair_g, diags(m_slack)]).tocoo()
        builder.add_rows(
            slack_rows,
            np.concatenate([x_cols, alpha_cols]),
            m_slack - kkt.pair_h,
            [RowTag(SLACK_SIDE, (str(tag),), OWNER) for tag in kkt.pair_tags],
            equality=False,
        )

        # mu - M_d alpha <= 0
        dual_rows = hstack([eye, diags(-m_dual)]).tocoo()
        builder.add_rows(
            dual_rows,
            np.concatenate([dual_cols[kkt.pair_dual], alpha_cols]),
            np.zeros(n_pairs),
            [RowTag(DUAL_SIDE, (str(tag),), OWNER) for tag in kkt.pair_tags],
            equality=False,
        )


def big_m_linearize(kkt: KktSystem, big_m: BigM) -> LinearizedPairs:
    assert len(big_m.slack) == kkt.n_pairs and len(big_m.dual) == kkt.n_pairs
    assert np.all(big_m.slack > 0) and np.all(big_m.dual > 0), "Big-M must be positive"
    return LinearizedPairs(kkt, big_m)


@dataclass(frozen=True)
class SaturationReport:
    dual_saturated: Tuple[str, ...]
    slack_saturated: Tuple[str, ...]

    @property
    def saturated(self) -> bool:
        return bool(self.dual_saturated or self.slack_saturated)


def detect_big_m_saturation(
    lin: LinearizedPairs, x: np.ndarray, duals: np.ndarray, rel_tol: float = 1e-6
) -> SaturationReport:
    """Pairs whose multiplier or slack sits on its Big-M constant"""
    kkt = lin.kkt
    dual = duals[kkt.pair_dual]
    slack = kkt.slacks(x)
    on_dual = dual >= lin.big_m.dual * (1.0 - rel_tol)
    on_slack = (~lin.big_m.certified) & (slack >= lin.big_m.slack * (1.0 - rel_tol))

    report = SaturationReport(
        dual_saturated=tuple(str(kkt.pair_tags[k]) for k in np.flatnonzero(on_dual)),
        slack_saturated=tuple(str(kkt.pair_tags[k]) for k in np.flatnonzero(on_slack)),
    )
    if report.saturated:
        _LOGGER.warning(
            "Big-M saturated on %s multiplier(s) and %s slack(s): M too small",
            len(report.dual_saturated),
            len(report.slack_saturated),
        )

    return report


# -----------------------------------------------------------------------------

Terms = Dict[str, float]


def _symbol(family: str, index: Sequence) -> str:
    return f"{MULTIPLIER_SYMBOLS[family]}[{','.join(str(i) for i in index)}]"


def reference_stationarity(
    tn: TransmissionNetwork, cfg: ScenarioConfig, prog: CanonicalConvexProgram
) -> Dict[str, Terms]:
    """Hand-written stationarity conditions of the TSO problem, keyed by variable
    name; the objective is scaled by the step length"""
    dt = cfg.step_hours
    reference: Dict[str, Terms] = {}

    for info in prog.variables:
        if info.owner != "tn":
            continue

        terms: Terms = {}
        if info.kind == PG:
            bus, t = info.index
            ca, cb, _cc = tn.bus(bus).gen_cost
            terms[f"x:{info.name}"] = 2.0 * ca * dt
            terms["const"] = cb * dt
            terms[_symbol(BALANCE_INTERIOR, (bus, t))] = -1.0
            terms[_symbol(PG_UB, (bus, t))] = 1.0
            terms[_symbol(SGE_POOL, (t,))] = -1.0
        elif info.kind == PV:
            bus, t = info.index
            terms["const"] = tn.bus(bus).pv_marginal_cost * dt
            terms[_symbol(BALANCE_INTERIOR, (bus, t))] = -1.0
            terms[_symbol(PV_UB, (bus, t))] = 1.0
            terms[_symbol(SGC_POOL, (t,))] = -1.0
        elif info.kind == PK_SGC:
            bus, t = info.index
            terms[_symbol(BALANCE_BOUNDARY, (bus, t))] = 1.0
            terms[_symbol(SGC_POOL, (t,))] = 1.0
        elif info.kind == PK_SGE:
            bus, t = info.index
            terms[_symbol(BALANCE_BOUNDARY, (bus, t))] = 1.0
            terms[_symbol(SGE_POOL, (t,))] = 1.0
        elif info.kind == PK_BG:
            bus, t = info.index
            terms[_symbol(BG_CAP, (bus, t))] = 1.0
            terms[_symbol(BALANCE_BOUNDARY, (bus, t))] = -1.0
        elif info.kind == FLOW:
            i, j, t = info.index
            line = next(l for l in tn.lines if (l.from_bus, l.to_bus) == (i, j))
            # lambda1 and lambda2 of the sending bus, as written
            terms[_symbol(BALANCE_INTERIOR, (i, t))] = 1.0
            terms[_symbol(BALANCE_BOUNDARY, (i, t))] = 1.0
            terms[_symbol(FLOW_DEF, (i, j, t))] = line.reactance
            terms[_symbol(FLOW_UB, (i, j, t))] = 1.0
            terms[_symbol(FLOW_LB, (i, j, t))] = -1.0
        elif info.kind == THETA:
            bus, t = info.index
            for line in tn.lines:
                if line.to_bus == bus:
                    key = _symbol(FLOW_DEF, (line.from_bus, line.to_bus, t))
                    terms[key] = terms.get(key, 0.0) + 1.0
                elif line.from_bus == bus:
                    key = _symbol(FLOW_DEF, (line.from_bus, line.to_bus, t))
                    terms[key] = terms.get(key, 0.0) - 1.0

            if bus in tn.reference_bus_ids:
                terms[_symbol(REF_ANGLE, (bus, t))] = 1.0
        else:
            continue

        reference[info.name] = terms

    return reference


def derived_terms(kkt: KktSystem, var: int) -> Tuple[Terms, Terms]:
    """(terms without bound multipliers, bound multiplier terms) of one row"""
    prog = kkt.prog
    n = prog.n_vars
    row = kkt.stationarity.getrow(var).tocoo()
    terms: Terms = {}
    bound_terms: Terms = {}
    for col, value in zip(row.col, row.data):
        if value == 0:
            continue

        if col < n:
            terms[f"x:{prog.variables[col].name}"] = float(value)
            continue

        dual = kkt.duals[col - n]
        if dual.kind in (NU, OMEGA):
            bound_terms[dual.symbol] = float(value)
        else:
            terms[dual.symbol] = float(value)

    if prog.c[var] != 0:
        terms["const"] = float(prog.c[var])

    return terms, bound_terms


def format_terms(terms: Terms) -> str:
    if not terms:
        return "0"

    return " + ".join(f"{value:.6g}*{name}" for name, value in sorted(terms.items()))


@dataclass(frozen=True)
class AuditMismatch:
    variable: str
    derived: str
    reference: str


@dataclass(frozen=True)
class AuditReport:
    matched: Tuple[str, ...]
    mismatches: Tuple[AuditMismatch, ...]
    bound_terms: Dict[str, str]
    """variable -> bound multiplier terms excluded from the comparison"""

    def mismatch_for(self, variable: str) -> Optional[AuditMismatch]:
        for mismatch in self.mismatches:
            if mismatch.variable == variable:
                return mismatch

        return None


def audit_kkt_against_reference(
    kkt: KktSystem,
    tn: TransmissionNetwork,
    cfg: ScenarioConfig,
    tol: float = 1e-9,
) -> AuditReport:
    """Compare derived stationarity rows with the hand-written ones, modulo
    bound multipliers"""
    reference = reference_stationarity(tn, cfg, kkt.prog)
    matched: List[str] = []
    mismatches: List[AuditMismatch] = []
    bounds: Dict[str, str] = {}

    for var, info in enumerate(kkt.prog.variables):
        expected = reference.get(info.name)
        if expected is None:
            continue

        derived, bound_terms = derived_terms(kkt, var)
        if bound_terms:
            bounds[info.name] = format_terms(bound_terms)

        names = set(derived) | set(expected)
        if all(abs(derived.get(k, 0.0) - expected.get(k, 0.0)) <= tol for k in names):
            matched.append(info.name)
        else:
            mismatches.append(
                AuditMismatch(info.name, format_terms(derived), format_terms(expected))
            )

    for mismatch in mismatches:
        _LOGGER.debug(
            "Stationarity of %s differs: derived %s, reference %s",
            mismatch.variable,
            mismatch.derived,
            mismatch.reference,
        )

    _LOGGER.info(
        "Reference audit: %s row(s) match, %s differ", len(matched), len(mismatches)
    )

    return AuditReport(tuple(matched), tuple(mismatches), bounds)
