"""DSO-led bilevel coordination of transmission and active distribution networks"""
from .config import BigMMode, DecisionSequence, ScenarioConfig, Tolerances
from .experiments import (
    ExperimentResult,
    MetricsBundle,
    compare_sequences,
    compute_metrics,
    run_competition,
    run_congestion_study,
    run_dso_first,
    run_scaling_study,
    run_tso_first,
)
from .ingest import CaseBundle, load_bundle, load_case, load_scenario
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

__version__ = "0.1.0"

__all__ = [
    "BessSpec",
    "BigMMode",
    "CaseBundle",
    "DecisionSequence",
    "DistributionNetwork",
    "DnBus",
    "DnLine",
    "ExperimentResult",
    "MetricsBundle",
    "Scenario",
    "ScenarioConfig",
    "TnBus",
    "TnLine",
    "Tolerances",
    "TransmissionNetwork",
    "compare_sequences",
    "compute_metrics",
    "load_bundle",
    "load_case",
    "load_scenario",
    "run_competition",
    "run_congestion_study",
    "run_dso_first",
    "run_scaling_study",
    "run_tso_first",
    "validate_scenario",
]
