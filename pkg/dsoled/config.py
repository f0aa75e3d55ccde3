"""Scenario configuration"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from .const import (
    DEFAULT_BIG_M_TSO,
    DEFAULT_CONE_TOL,
    DEFAULT_FEASIBILITY_TOL,
    DEFAULT_GAP_TOL,
    DEFAULT_INTEGRALITY_TOL,
    DEFAULT_STATIONARITY_TOL,
)


class DecisionSequence(str, Enum):
    DSO_FIRST = "dso_first"
    TSO_FIRST = "tso_first"


class BigMMode(str, Enum):
    INDIVIDUAL = "individual"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Tolerances:
    """Solver tolerances"""

    feasibility: float = DEFAULT_FEASIBILITY_TOL
    """Max scaled row violation of an accepted point"""

    gap: float = DEFAULT_GAP_TOL
    """Relative optimality gap of branch-and-bound"""

    cone: float = DEFAULT_CONE_TOL
    """Exactness threshold for l*v - (p^2 + q^2)"""

    integrality: float = DEFAULT_INTEGRALITY_TOL
    stationarity: float = DEFAULT_STATIONARITY_TOL

    @staticmethod
    def from_dict(config: Dict[str, Any]) -> "Tolerances":
        return Tolerances(
            feasibility=float(config.get("feasibility", DEFAULT_FEASIBILITY_TOL)),
            gap=float(config.get("gap", DEFAULT_GAP_TOL)),
            cone=float(config.get("cone", DEFAULT_CONE_TOL)),
            integrality=float(config.get("integrality", DEFAULT_INTEGRALITY_TOL)),
            stationarity=float(config.get("stationarity", DEFAULT_STATIONARITY_TOL)),
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "feasibility": self.feasibility,
            "gap": self.gap,
            "cone": self.cone,
            "integrality": self.integrality,
            "stationarity": self.stationarity,
        }


def _series(value: Union[float, Sequence[float]], horizon: int) -> Tuple[float, ...]:
    if isinstance(value, (int, float)):
        return tuple(float(value) for _ in range(horizon))

    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class ScenarioConfig:
    """Time horizon, prices, availabilities and solver settings of a scenario"""

    horizon: int
    """Number of periods T"""

    step_hours: float
    """Period length in hours"""

    price_bgc: Tuple[float, ...]
    """ADN purchase price of cheap (PV) energy, $/MWh per period"""

    price_bge: Tuple[float, ...]
    """ADN purchase price of expensive (thermal) energy, $/MWh per period"""

    price_sg: Tuple[float, ...]
    """Compensation for ADN sales to the grid, $/MWh per period"""

    pv_availability_tn: Tuple[float, ...]
    """PV^{T,max}_t in MW per unit of capacity ratio"""

    pv_availability_dn: Tuple[float, ...]
    """PV^{D,max}_t in MW per unit of capacity ratio"""

    pv_reference_dn: float = 1.0
    """Installed ADN PV in MW per unit of capacity ratio"""

    big_m_tso: float = DEFAULT_BIG_M_TSO
    """Fallback (or uniform) complementarity constant"""

    big_m_p2p: Optional[float] = None
    """Seller/buyer gate constant; None derives it per ADN"""

    big_m_mode: BigMMode = BigMMode.INDIVIDUAL
    tolerances: Tolerances = field(default_factory=Tolerances)
    decision_sequence: DecisionSequence = DecisionSequence.DSO_FIRST

    cyclic_soc: bool = False
    """Impose soc at the last period >= soc_initial"""

    leader_stationarity: bool = False
    """Also impose stationarity of the boundary exchange variables"""

    seed: int = 0

    @property
    def periods(self) -> range:
        return range(self.horizon)

    def with_prices(
        self,
        price_bgc: Optional[Sequence[float]] = None,
        price_bge: Optional[Sequence[float]] = None,
        price_sg: Optional[Sequence[float]] = None,
    ) -> "ScenarioConfig":
        return replace(
            self,
            price_bgc=self.price_bgc if price_bgc is None else tuple(price_bgc),
            price_bge=self.price_bge if price_bge is None else tuple(price_bge),
            price_sg=self.price_sg if price_sg is None else tuple(price_sg),
        )

    @staticmethod
    def from_dict(config: Dict[str, Any]) -> "ScenarioConfig":
        horizon = int(config["horizon"])
        big_m_p2p = config.get("big_m_p2p")

        return ScenarioConfig(
            horizon=horizon,
            step_hours=float(config.get("step_hours", 1.0)),
            price_bgc=_series(config["price_bgc"], horizon),
            price_bge=_series(config["price_bge"], horizon),
            price_sg=_series(config["price_sg"], horizon),
            pv_availability_tn=_series(config.get("pv_availability_tn", 0.0), horizon),
            pv_availability_dn=_series(config.get("pv_availability_dn", 0.0), horizon),
            pv_reference_dn=float(config.get("pv_reference_dn", 1.0)),
            big_m_tso=float(config.get("big_m_tso", DEFAULT_BIG_M_TSO)),
            big_m_p2p=None if big_m_p2p is None else float(big_m_p2p),
            big_m_mode=BigMMode(config.get("big_m_mode", BigMMode.INDIVIDUAL)),
            tolerances=Tolerances.from_dict(config.get("tolerances", {})),
            #
            decision_sequence=DecisionSequence(
                config.get("decision_sequence", DecisionSequence.DSO_FIRST)
            ),
            cyclic_soc=bool(config.get("cyclic_soc", False)),
            leader_stationarity=bool(config.get("leader_stationarity", False)),
            seed=int(config.get("seed", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "horizon": self.horizon,
            "step_hours": self.step_hours,
            "price_bgc": list(self.price_bgc),
            "price_bge": list(self.price_bge),
            "price_sg": list(self.price_sg),
            "pv_availability_tn": list(self.pv_availability_tn),
            "pv_availability_dn": list(self.pv_availability_dn),
            "pv_reference_dn": self.pv_reference_dn,
            "big_m_tso": self.big_m_tso,
            "big_m_p2p": self.big_m_p2p,
            "big_m_mode": self.big_m_mode.value,
            "tolerances": self.tolerances.to_dict(),
            "decision_sequence": self.decision_sequence.value,
            "cyclic_soc": self.cyclic_soc,
            "leader_stationarity": self.leader_stationarity,
            "seed": self.seed,
        }
