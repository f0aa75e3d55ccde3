"""Distribution network branch-flow model with PV, batteries and P2P trading"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import ScenarioConfig
from .const import (
    DEFAULT_CONE_TOL,
    DN_CH,
    DN_DP,
    DN_DP_BOUNDARY,
    DN_DP_MINUS,
    DN_DP_PLUS,
    DN_DS,
    DN_L,
    DN_LOSS_BG,
    DN_LOSS_SG,
    DN_P,
    DN_P_BG,
    DN_P_BM,
    DN_P_SG,
    DN_P_SM,
    DN_PK_BGC,
    DN_PK_BGE,
    DN_PK_SG,
    DN_PV,
    DN_Q,
    DN_QG,
    DN_SLACK_DOWN,
    DN_SLACK_UP,
    DN_SOC,
    DN_V,
    DN_W,
    DN_Y,
    ELASTIC_PENALTY,
    EXCHANGE_KINDS,
)
from .network import DistributionNetwork, is_radial
from .program import INF, CanonicalConvexProgram, ProgramBuilder, RowTag

_LOGGER = logging.getLogger(__name__)

ExchangeFixing = Mapping[Tuple[str, int], Sequence[float]]


class NonRadialError(Exception):
    pass


def owner_of(dn: DistributionNetwork) -> str:
    return f"adn{dn.id}"


@dataclass(frozen=True)
class ObjectiveTerm:
    bus: int
    t: int
    kind: str
    var: int
    coefficient: float
    """price * step_hours, negative for sales"""


@dataclass(frozen=True)
class AdnObjectiveTerms:
    """Price-weighted boundary exchange terms of one ADN"""

    terms: Tuple[ObjectiveTerm, ...]

    def evaluate(self, x: np.ndarray) -> float:
        return float(sum(term.coefficient * x[term.var] for term in self.terms))


@dataclass(frozen=True)
class AdnProgram:
    dn: DistributionNetwork
    prog: CanonicalConvexProgram
    objective_terms: AdnObjectiveTerms
    big_m: float
    """Seller/buyer gate constant"""

    step_hours: float
    horizon: int
    elastic: bool = False

    @property
    def owner(self) -> str:
        return owner_of(self.dn)

    def var(self, kind: str, index: Sequence) -> Optional[int]:
        return self.prog.lookup(kind, tuple(index), self.owner)


def derive_p2p_big_m(dn: DistributionNetwork, cfg: ScenarioConfig) -> float:
    """2 * (peak load + installed PV at best availability + rated battery power)"""
    if cfg.big_m_p2p is not None:
        return cfg.big_m_p2p

    best = max(cfg.pv_availability_dn, default=0.0)
    pv = sum(bus.pv_capacity_ratio for bus in dn.buses) * best
    return 2.0 * (dn.peak_load() + pv + dn.rated_bess_power())


def build_adn_program(
    dn: DistributionNetwork,
    cfg: ScenarioConfig,
    fixed_exchanges: Optional[ExchangeFixing] = None,
    elastic: bool = False,
) -> AdnProgram:
    """Branch-flow ADN model in canonical form.

    Args:
        dn: radial distribution network
        cfg: scenario configuration (prices, availability, horizon)
        fixed_exchanges: (kind, boundary bus) -> per-period MW fixing pk variables
        elastic: fixings become pk = fixed + s+ - s- with penalized slacks

    Returns:
        program with owner "adn<id>"
    """
    if not is_radial(dn):
        raise NonRadialError(f"ADN {dn.id} is not a tree rooted at bus {dn.root_bus_id}")

    fixed_exchanges = fixed_exchanges or {}
    owner = owner_of(dn)
    builder = ProgramBuilder()
    dt = cfg.step_hours
    base = dn.base_mva
    agents = list(dn.agent_bus_ids)
    boundary = list(dn.boundary_bus_ids)
    big_m = derive_p2p_big_m(dn, cfg)

    def add(kind: str, index: Sequence, lb: float = 0.0, ub: float = INF, binary: bool = False) -> int:
        return builder.add_variable(kind, index, owner, lb=lb, ub=ub, binary=binary)

    def tag(family: str, *index) -> RowTag:
        return RowTag(family, tuple(index), owner)

    var: Dict[Tuple, int] = {}
    terms: List[ObjectiveTerm] = []

    for t in cfg.periods:
        for line in dn.lines:
            key = (line.from_bus, line.to_bus, t)
            var[(DN_P,) + key] = add(DN_P, key, lb=-INF)
            var[(DN_Q,) + key] = add(DN_Q, key, lb=-INF)
            var[(DN_L,) + key] = add(DN_L, key)

        for bus in dn.buses:
            var[(DN_V, bus.id, t)] = add(DN_V, (bus.id, t))
            if bus.qg_min != 0.0 or bus.qg_max != 0.0:
                var[(DN_QG, bus.id, t)] = add(DN_QG, (bus.id, t), lb=-INF)

        for bus_id in agents:
            bus = dn.bus(bus_id)
            if bus.pv_capacity_ratio > 0:
                var[(DN_PV, bus_id, t)] = add(DN_PV, (bus_id, t))

            if bus.battery is not None:
                for kind in (DN_CH, DN_DS, DN_SOC):
                    var[(kind, bus_id, t)] = add(kind, (bus_id, t))

                var[(DN_W, bus_id, t)] = add(DN_W, (bus_id, t), ub=1.0, binary=True)

            var[(DN_DP, bus_id, t)] = add(DN_DP, (bus_id, t), lb=-INF)
            for kind in (DN_DP_PLUS, DN_DP_MINUS, DN_P_SM, DN_P_BM, DN_P_SG, DN_P_BG):
                var[(kind, bus_id, t)] = add(kind, (bus_id, t))

            var[(DN_Y, bus_id, t)] = add(DN_Y, (bus_id, t), ub=1.0, binary=True)

        for k, bus_id in enumerate(boundary):
            var[(DN_DP_BOUNDARY, bus_id, t)] = add(DN_DP_BOUNDARY, (bus_id, t), lb=-INF)
            for kind in EXCHANGE_KINDS:
                fixed = fixed_exchanges.get((kind, bus_id))
                if fixed is not None and not elastic:
                    var[(kind, bus_id, t)] = add(
                        kind, (bus_id, t), lb=float(fixed[t]), ub=float(fixed[t])
                    )
                else:
                    var[(kind, bus_id, t)] = add(kind, (bus_id, t))

        var[(DN_LOSS_SG, t)] = add(DN_LOSS_SG, (t,))
        var[(DN_LOSS_BG, t)] = add(DN_LOSS_BG, (t,))

    # Objective
    for t in cfg.periods:
        for bus_id in boundary:
            for kind, price in (
                (DN_PK_BGC, cfg.price_bgc[t]),
                (DN_PK_BGE, cfg.price_bge[t]),
                (DN_PK_SG, -cfg.price_sg[t]),
            ):
                column = var[(kind, bus_id, t)]
                builder.add_linear(column, price * dt)
                terms.append(ObjectiveTerm(bus_id, t, kind, column, price * dt))

    _add_network_rows(builder, dn, cfg, var, tag)
    _add_pv_rows(builder, dn, cfg, var, tag)
    _add_battery_rows(builder, dn, cfg, var, tag)
    _add_p2p_rows(builder, dn, cfg, var, tag, big_m)

    if elastic and fixed_exchanges:
        for (kind, bus_id), values in sorted(fixed_exchanges.items()):
            for t in cfg.periods:
                up = add(DN_SLACK_UP, (kind, bus_id, t))
                down = add(DN_SLACK_DOWN, (kind, bus_id, t))
                builder.add_linear(up, ELASTIC_PENALTY * dt)
                builder.add_linear(down, ELASTIC_PENALTY * dt)
                builder.add_eq(
                    {var[(kind, bus_id, t)]: 1.0, up: -1.0, down: 1.0},
                    float(values[t]),
                    tag("exchange_elastic", kind, bus_id, t),
                )

    prog = builder.build(meta={"step_hours": dt, "horizon": cfg.horizon, "base_mva": base})
    _LOGGER.debug(
        "ADN %s program: %s variable(s) (%s binary), %s row(s), M=%.4g",
        dn.id,
        prog.n_vars,
        len(prog.binary_indices),
        prog.n_constraints,
        big_m,
    )

    return AdnProgram(
        dn=dn,
        prog=prog,
        objective_terms=AdnObjectiveTerms(tuple(terms)),
        big_m=big_m,
        step_hours=dt,
        horizon=cfg.horizon,
        elastic=bool(elastic and fixed_exchanges),
    )


def _add_network_rows(builder, dn, cfg, var, tag) -> None:
    base = dn.base_mva
    agents = set(dn.agent_bus_ids)
    for t in cfg.periods:
        for bus in dn.buses:
            active: Dict[int, float] = {}
            reactive: Dict[int, float] = {}
            for line in dn.lines:
                key = (line.from_bus, line.to_bus, t)
                if line.from_bus == bus.id:
                    active[var[(DN_P,) + key]] = base
                    reactive[var[(DN_Q,) + key]] = base
                elif line.to_bus == bus.id:
                    active[var[(DN_P,) + key]] = -base
                    active[var[(DN_L,) + key]] = base * line.resistance
                    reactive[var[(DN_Q,) + key]] = -base
                    reactive[var[(DN_L,) + key]] = base * line.reactance

            if bus.id in agents:
                active[var[(DN_DP, bus.id, t)]] = -1.0
            else:
                active[var[(DN_DP_BOUNDARY, bus.id, t)]] = -1.0

            qg = var.get((DN_QG, bus.id, t))
            if qg is not None:
                reactive[qg] = -1.0

            builder.add_eq(active, 0.0, tag("active_balance", bus.id, t))
            builder.add_eq(
                reactive, -bus.reactive_demand[t], tag("reactive_balance", bus.id, t)
            )

        for bus_id in dn.agent_bus_ids:
            bus = dn.bus(bus_id)
            coeffs = {var[(DN_DP, bus_id, t)]: 1.0}
            if (DN_PV, bus_id, t) in var:
                coeffs[var[(DN_PV, bus_id, t)]] = -1.0

            if (DN_CH, bus_id, t) in var:
                coeffs[var[(DN_CH, bus_id, t)]] = 1.0
                coeffs[var[(DN_DS, bus_id, t)]] = -1.0

            builder.add_eq(coeffs, -bus.demand[t], tag("agent_injection", bus_id, t))

        for bus_id in dn.boundary_bus_ids:
            builder.add_eq(
                {
                    var[(DN_DP_BOUNDARY, bus_id, t)]: 1.0,
                    var[(DN_PK_BGC, bus_id, t)]: -1.0,
                    var[(DN_PK_BGE, bus_id, t)]: -1.0,
                    var[(DN_PK_SG, bus_id, t)]: 1.0,
                },
                0.0,
                tag("boundary_exchange", bus_id, t),
            )

        for line in dn.lines:
            key = (line.from_bus, line.to_bus, t)
            r, x = line.resistance, line.reactance
            builder.add_eq(
                {
                    var[(DN_V, line.to_bus, t)]: 1.0,
                    var[(DN_V, line.from_bus, t)]: -1.0,
                    var[(DN_P,) + key]: 2.0 * r,
                    var[(DN_Q,) + key]: 2.0 * x,
                    var[(DN_L,) + key]: -(r * r + x * x),
                },
                0.0,
                tag("voltage_drop", *key),
            )
            builder.add_cone(
                var[(DN_L,) + key],
                var[(DN_V, line.from_bus, t)],
                var[(DN_P,) + key],
                var[(DN_Q,) + key],
                tag("branch_cone", *key),
            )
            builder.add_le(
                {var[(DN_L,) + key]: 1.0}, line.current_sq_limit, tag("current_limit", *key)
            )

        for bus in dn.buses:
            qg = var.get((DN_QG, bus.id, t))
            if qg is not None:
                builder.add_le({qg: 1.0}, bus.qg_max, tag("qg_max", bus.id, t))
                builder.add_le({qg: -1.0}, -bus.qg_min, tag("qg_min", bus.id, t))

            v = var[(DN_V, bus.id, t)]
            builder.add_le({v: 1.0}, bus.v_max, tag("voltage_max", bus.id, t))
            builder.add_le({v: -1.0}, -bus.v_min, tag("voltage_min", bus.id, t))

        for k, bus_id in enumerate(dn.boundary_bus_ids):
            for family, kind, cap in (
                ("sale_cap", DN_PK_SG, dn.k_sg[k]),
                ("cheap_cap", DN_PK_BGC, dn.k_bgc[k]),
                ("expensive_cap", DN_PK_BGE, dn.k_bge[k]),
            ):
                builder.add_le({var[(kind, bus_id, t)]: 1.0}, cap, tag(family, bus_id, t))


def _add_pv_rows(builder, dn, cfg, var, tag) -> None:
    for t in cfg.periods:
        for bus_id in dn.agent_bus_ids:
            pv = var.get((DN_PV, bus_id, t))
            if pv is not None:
                builder.add_le(
                    {pv: 1.0},
                    cfg.pv_availability_dn[t] * dn.bus(bus_id).pv_capacity_ratio,
                    tag("pv_cap", bus_id, t),
                )


def _add_battery_rows(builder, dn, cfg, var, tag) -> None:
    dt = cfg.step_hours
    for bus_id in dn.agent_bus_ids:
        bess = dn.bus(bus_id).battery
        if bess is None:
            continue

        nu = 1.0 if bess.installed else 0.0
        for t in cfg.periods:
            soc = var[(DN_SOC, bus_id, t)]
            ch = var[(DN_CH, bus_id, t)]
            ds = var[(DN_DS, bus_id, t)]
            w = var[(DN_W, bus_id, t)]
            coeffs = {soc: 1.0, ch: -bess.eff_charge * dt, ds: dt / bess.eff_discharge}
            if t == 0:
                builder.add_eq(coeffs, bess.soc_initial, tag("soc_anchor", bus_id, t))
            else:
                coeffs[var[(DN_SOC, bus_id, t - 1)]] = -1.0
                builder.add_eq(coeffs, 0.0, tag("soc_recursion", bus_id, t))

            builder.add_le(
                {soc: 1.0}, bess.soc_max * bess.capacity, tag("soc_max", bus_id, t)
            )
            builder.add_le(
                {soc: -1.0}, -bess.soc_min * bess.capacity, tag("soc_min", bus_id, t)
            )
            builder.add_le(
                {ch: 1.0, w: -bess.rated_power}, 0.0, tag("charge_gate", bus_id, t)
            )
            builder.add_le(
                {ds: 1.0, w: bess.rated_power},
                bess.rated_power * nu,
                tag("discharge_gate", bus_id, t),
            )
            builder.add_le({w: 1.0}, nu, tag("install_gate", bus_id, t))

        if cfg.cyclic_soc:
            last = cfg.horizon - 1
            builder.add_le(
                {var[(DN_SOC, bus_id, last)]: -1.0},
                -bess.soc_initial,
                tag("soc_cyclic", bus_id, last),
            )


def _add_p2p_rows(builder, dn, cfg, var, tag, big_m: float) -> None:
    for t in cfg.periods:
        for bus_id in dn.agent_bus_ids:
            dp_plus = var[(DN_DP_PLUS, bus_id, t)]
            dp_minus = var[(DN_DP_MINUS, bus_id, t)]
            y = var[(DN_Y, bus_id, t)]
            builder.add_eq(
                {var[(DN_DP, bus_id, t)]: 1.0, dp_plus: -1.0, dp_minus: 1.0},
                0.0,
                tag("p2p_split", bus_id, t),
            )
            builder.add_eq(
                {dp_plus: 1.0, var[(DN_P_SG, bus_id, t)]: -1.0, var[(DN_P_SM, bus_id, t)]: -1.0},
                0.0,
                tag("seller_side", bus_id, t),
            )
            builder.add_eq(
                {dp_minus: 1.0, var[(DN_P_BG, bus_id, t)]: -1.0, var[(DN_P_BM, bus_id, t)]: -1.0},
                0.0,
                tag("buyer_side", bus_id, t),
            )
            builder.add_le({dp_plus: 1.0, y: -big_m}, 0.0, tag("seller_gate", bus_id, t))
            builder.add_le({dp_minus: 1.0, y: big_m}, big_m, tag("buyer_gate", bus_id, t))

        market = {var[(DN_P_SM, b, t)]: 1.0 for b in dn.agent_bus_ids}
        market.update({var[(DN_P_BM, b, t)]: -1.0 for b in dn.agent_bus_ids})
        builder.add_eq(market, 0.0, tag("local_market", t))

        sale = {var[(DN_P_SG, b, t)]: 1.0 for b in dn.agent_bus_ids}
        sale[var[(DN_LOSS_SG, t)]] = -1.0
        sale.update({var[(DN_PK_SG, b, t)]: -1.0 for b in dn.boundary_bus_ids})
        builder.add_eq(sale, 0.0, tag("grid_sale", t))

        purchase = {var[(DN_P_BG, b, t)]: 1.0 for b in dn.agent_bus_ids}
        purchase[var[(DN_LOSS_BG, t)]] = 1.0
        for b in dn.boundary_bus_ids:
            purchase[var[(DN_PK_BGC, b, t)]] = -1.0
            purchase[var[(DN_PK_BGE, b, t)]] = -1.0

        builder.add_eq(purchase, 0.0, tag("grid_purchase", t))


# -----------------------------------------------------------------------------


@dataclass
class AdnSolution:
    adn: AdnProgram
    x: np.ndarray
    objective: float = float("nan")

    def __post_init__(self) -> None:
        if np.isnan(self.objective):
            self.objective = self.adn.prog.objective_value(self.x)

    @property
    def dn(self) -> DistributionNetwork:
        return self.adn.dn

    def value(self, kind: str, *index) -> float:
        var = self.adn.var(kind, index)
        return 0.0 if var is None else float(self.x[var])

    def values(self, kind: str) -> Dict[Tuple, float]:
        prog = self.adn.prog
        return {
            prog.variables[i].index: float(self.x[i])
            for i in prog.indices_of(kind, self.adn.owner)
        }

    def exchange_cost(self) -> float:
        """Prices times realized exchange, excluding any elastic penalty"""
        return self.adn.objective_terms.evaluate(self.x)

    def exchanges(self) -> Dict[str, np.ndarray]:
        """kind -> per-period MW summed over boundary buses"""
        result = {}
        for kind in EXCHANGE_KINDS:
            series = np.zeros(self.adn.horizon)
            for (bus_id, t), value in self.values(kind).items():
                series[t] += value

            result[kind] = series

        return result

    def soc_total(self) -> np.ndarray:
        series = np.zeros(self.adn.horizon)
        for (bus_id, t), value in self.values(DN_SOC).items():
            series[t] += value

        return series

    def p2p_energy(self) -> float:
        """Energy traded in the local market, MWh"""
        return float(sum(self.values(DN_P_SM).values()) * self.adn.step_hours)

    def losses(self) -> np.ndarray:
        """Sum of R * l per period, MW"""
        series = np.zeros(self.adn.horizon)
        for line in self.dn.lines:
            for t in range(self.adn.horizon):
                series[t] += (
                    self.dn.base_mva
                    * line.resistance
                    * self.value(DN_L, line.from_bus, line.to_bus, t)
                )

        return series

    def elastic_slack(self) -> float:
        return float(
            sum(self.values(DN_SLACK_UP).values()) + sum(self.values(DN_SLACK_DOWN).values())
        )

    def to_frame(self) -> pd.DataFrame:
        """Long format (bus, t, variable, value); line variables use "from-to" as bus"""
        records = []
        for i, info in enumerate(self.adn.prog.variables):
            index = info.index
            if info.kind in (DN_LOSS_SG, DN_LOSS_BG):
                element, t = "", index[0]
            elif info.kind in (DN_P, DN_Q, DN_L):
                element, t = f"{index[0]}-{index[1]}", index[2]
            elif info.kind in (DN_SLACK_UP, DN_SLACK_DOWN):
                element, t = f"{index[0]}@{index[1]}", index[2]
            else:
                element, t = str(index[0]), index[1]

            records.append((element, int(t), info.kind, float(self.x[i])))

        return pd.DataFrame.from_records(records, columns=["bus", "t", "variable", "value"])

    def save_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)


def battery_recursion_check(
    sol: AdnSolution, dn: DistributionNetwork, cfg: ScenarioConfig
) -> float:
    """Max |soc_t - soc_{t-1} - (eff_ch * ch - ds / eff_ds) * dt| including the anchor"""
    dt = cfg.step_hours
    worst = 0.0
    for bus_id in dn.agent_bus_ids:
        bess = dn.bus(bus_id).battery
        if bess is None:
            continue

        previous = bess.soc_initial
        for t in cfg.periods:
            soc = sol.value(DN_SOC, bus_id, t)
            delta = (
                bess.eff_charge * sol.value(DN_CH, bus_id, t)
                - sol.value(DN_DS, bus_id, t) / bess.eff_discharge
            ) * dt
            worst = max(worst, abs(soc - previous - delta))
            previous = soc

    return worst


@dataclass(frozen=True)
class P2pReport:
    local_market: np.ndarray
    """Per period |sum sm - sum bm|, MW"""

    grid_sale: np.ndarray
    grid_purchase: np.ndarray
    loss_identity: np.ndarray
    """|loss_sg + loss_bg - sum R*l| per period"""

    exclusivity_violations: Tuple[Tuple[int, int], ...]
    """(agent bus, t) selling and buying at once, or against its seller flag"""

    traded_energy: float

    def max_residual(self) -> float:
        return float(
            max(
                np.max(self.local_market, initial=0.0),
                np.max(self.grid_sale, initial=0.0),
                np.max(self.grid_purchase, initial=0.0),
                np.max(self.loss_identity, initial=0.0),
            )
        )

    def ok(self, tol: float = 1e-7) -> bool:
        return (self.max_residual() <= tol) and (not self.exclusivity_violations)


def p2p_clearing_check(sol: AdnSolution, tol: float = 1e-6) -> P2pReport:
    dn = sol.dn
    horizon = sol.adn.horizon
    market = np.zeros(horizon)
    sale = np.zeros(horizon)
    purchase = np.zeros(horizon)
    violations: List[Tuple[int, int]] = []

    for t in range(horizon):
        for bus_id in dn.agent_bus_ids:
            market[t] += sol.value(DN_P_SM, bus_id, t) - sol.value(DN_P_BM, bus_id, t)
            sale[t] += sol.value(DN_P_SG, bus_id, t)
            purchase[t] += sol.value(DN_P_BG, bus_id, t)

            plus = sol.value(DN_DP_PLUS, bus_id, t)
            minus = sol.value(DN_DP_MINUS, bus_id, t)
            y = sol.value(DN_Y, bus_id, t)
            if (plus > tol and minus > tol) or (y > 0.5 and minus > tol) or (
                y < 0.5 and plus > tol
            ):
                violations.append((bus_id, t))

        sale[t] -= sol.value(DN_LOSS_SG, t)
        purchase[t] += sol.value(DN_LOSS_BG, t)
        for bus_id in dn.boundary_bus_ids:
            sale[t] -= sol.value(DN_PK_SG, bus_id, t)
            purchase[t] -= sol.value(DN_PK_BGC, bus_id, t) + sol.value(DN_PK_BGE, bus_id, t)

    losses = sol.losses()
    settled = np.array(
        [sol.value(DN_LOSS_SG, t) + sol.value(DN_LOSS_BG, t) for t in range(horizon)]
    )

    return P2pReport(
        local_market=np.abs(market),
        grid_sale=np.abs(sale),
        grid_purchase=np.abs(purchase),
        loss_identity=np.abs(settled - losses),
        exclusivity_violations=tuple(violations),
        traded_energy=sol.p2p_energy(),
    )


@dataclass(frozen=True)
class ConeTightnessReport:
    residuals: np.ndarray
    """l * v - (p^2 + q^2) per (line, t), p.u."""

    elements: Tuple[Tuple[int, int, int], ...]
    tol: float
    flagged: Tuple[Tuple[int, int, int], ...] = field(default_factory=tuple)

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals), initial=0.0))

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.residuals)) if self.residuals.size else 0.0

    @property
    def tight(self) -> bool:
        return not self.flagged

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "from_bus": [e[0] for e in self.elements],
                "to_bus": [e[1] for e in self.elements],
                "t": [e[2] for e in self.elements],
                "residual": self.residuals,
                "tight": [abs(r) <= self.tol for r in self.residuals],
            }
        )


def cone_tightness(sol: AdnSolution, tol: float = DEFAULT_CONE_TOL) -> ConeTightnessReport:
    cones = sol.adn.prog.cones
    residuals = cones.residuals(sol.x) if len(cones) else np.zeros(0)
    elements = tuple(tuple(tag.index) for tag in cones.tags)
    flagged = tuple(e for e, r in zip(elements, residuals) if abs(r) > tol)
    if flagged:
        _LOGGER.warning(
            "ADN %s: relaxation not tight on %s branch-period(s), max residual %.3g",
            sol.dn.id,
            len(flagged),
            float(np.max(np.abs(residuals))),
        )

    return ConeTightnessReport(residuals, elements, tol, flagged)  # type: ignore[arg-type]


def conservation_residual(sol: AdnSolution) -> float:
    """Max over periods of |agents' net injection + net import - losses|, MW"""
    dn = sol.dn
    losses = sol.losses()
    worst = 0.0
    for t in range(sol.adn.horizon):
        total = 0.0
        for bus_id in dn.agent_bus_ids:
            total += (
                sol.value(DN_PV, bus_id, t)
                - dn.bus(bus_id).demand[t]
                - sol.value(DN_CH, bus_id, t)
                + sol.value(DN_DS, bus_id, t)
            )

        for bus_id in dn.boundary_bus_ids:
            total += (
                sol.value(DN_PK_BGC, bus_id, t)
                + sol.value(DN_PK_BGE, bus_id, t)
                - sol.value(DN_PK_SG, bus_id, t)
            )

        worst = max(worst, abs(total - losses[t]))

    return worst
