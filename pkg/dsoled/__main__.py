import argparse
import logging
import logging.config
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bnb import BnbOptions, Engine, LimitReached, TooManyBinaries, brute_force_enumerate, solve_bnb
from .config import DecisionSequence
from .const import DEFAULT_BRUTE_FORCE_CAP
from .distribution import NonRadialError, build_adn_program
from .experiments import (
    SolveSettings,
    StageInfeasible,
    adn_checks,
    compare_sequences,
    compute_metrics,
    fingerprint,
    run_competition,
    run_congestion_study,
    run_scaling_study,
    run_sequence,
)
from .file_hash import get_config_hash
from .ingest import (
    AllocationError,
    MissingBatterySpec,
    ParseError,
    SchemaError,
    ValidationError,
    load_scenario,
    read_json,
    resolve_case,
    sizing_report,
)
from .kkt import NonConvex, derive_kkt
from .micro import micro_suite, random_transmission_suite
from .network import Scenario
from .single_level import (
    CouplingError,
    assemble_single_level,
    check_kkt_soundness,
    solve_active_set,
)
from .storage import ArtifactStorage, RunManifest, default_output_dir, hash_inputs, print_summary
from .transmission import Infeasible, NotSolved, Unbounded, build_tn_program, solve_tn_direct
from .util import parse_counts, relative_gap

_FILE = Path(__file__)
_DIR = _FILE.parent
_LOGGER = logging.getLogger(_FILE.stem)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LIMIT = 2

# Branch-and-bound gap when compared against enumeration
_EXACT_GAP = 1e-9

EXPERIMENTS = ("compare-sequence", "competition", "congestion", "scaling")

DOMAIN_ERRORS = (
    ParseError,
    SchemaError,
    ValidationError,
    AllocationError,
    MissingBatterySpec,
    Infeasible,
    Unbounded,
    NotSolved,
    NonRadialError,
    NonConvex,
    CouplingError,
    TooManyBinaries,
    StageInfeasible,
    LimitReached,
    ValueError,
    OSError,
)


def configure_logging(debug: bool = False) -> None:
    log_level = "DEBUG" if debug else "INFO"
    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "standard": {"format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"},
            },
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "level": log_level,
                    "formatter": "standard",
                    "stream": "ext://sys.stderr",
                },
            },
            "loggers": {
                "": {"handlers": ["console"], "level": log_level, "propagate": True},
                "cvxpy": {
                    "level": "INFO" if debug else "WARNING",
                    "handlers": ["console"],
                    "propagate": False,
                },
            },
        }
    )


def _add_solve_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--gap", type=float, default=None, help="Relative optimality gap (default: 1e-5)"
    )
    parser.add_argument(
        "--time-limit", "--time_limit", type=float, help="Seconds per branch-and-bound run"
    )
    parser.add_argument(
        "--node-limit", "--node_limit", type=int, help="Nodes per branch-and-bound run"
    )
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Serial node processing in a fixed order (implies one worker)",
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="Parallel node evaluations and pipeline runs"
    )
    parser.add_argument(
        "--engine",
        choices=[e.value for e in Engine],
        default=Engine.AUTO.value,
        help="Branch-and-bound engine (default: auto)",
    )
    parser.add_argument("--horizon", type=int, help="Override the number of periods")
    parser.add_argument(
        "--equal-prices",
        "--equal_prices",
        action="store_true",
        help="Price thermal energy like PV energy",
    )
    parser.add_argument(
        "-d",
        "--output-dir",
        "--output_dir",
        help="Root of the artifact directories (default: $DSOLED_OUTPUT_DIR or ./runs)",
    )


def _settings(args: argparse.Namespace) -> SolveSettings:
    deterministic = bool(args.deterministic) or args.workers <= 1
    opts = BnbOptions.from_dict(
        {
            "gap_tol": args.gap if args.gap is not None else 1e-5,
            "node_limit": args.node_limit,
            "time_limit": args.time_limit,
            "deterministic": deterministic,
            "workers": 1 if deterministic else args.workers,
        }
    )
    return SolveSettings(
        engine=Engine(args.engine),
        opts=opts,
        workers=1 if args.deterministic else max(1, args.workers),
    )


def _load(args: argparse.Namespace, **overrides: Any) -> Scenario:
    scenario = load_scenario(args.config, horizon=args.horizon, **overrides)
    if args.equal_prices:
        scenario = Scenario(
            scenario.tn, scenario.adns, scenario.cfg.with_prices(price_bge=scenario.cfg.price_bgc)
        )

    return scenario


def _input_files(ref: str) -> List[Path]:
    path = resolve_case(ref)
    files = [path]
    data = read_json(path)
    if isinstance(data, dict):
        for key in ("tn_case", "adn_template"):
            if key in data:
                files.append(resolve_case(str(data[key]), str(path.parent)))

    return files


def _manifest(args: argparse.Namespace, command: str, scenario: Optional[Scenario]) -> RunManifest:
    config = getattr(args, "config", None)
    return RunManifest(
        command=command,
        config_path="" if config is None else str(config),
        seed=0 if scenario is None else scenario.cfg.seed,
        version=__version__,
        input_hashes={} if config is None else hash_inputs(_input_files(config)),
        output_dir="",
        argv=list(sys.argv[1:]),
    )


def _run_hash(scenario_hash: str, args: argparse.Namespace, *extra: Any) -> str:
    """Every option that can change a result is part of the hash"""
    return get_config_hash(
        {
            "scenario": scenario_hash,
            "engine": args.engine,
            "gap": args.gap,
            "node_limit": args.node_limit,
            "time_limit": args.time_limit,
            "deterministic": args.deterministic,
            "workers": args.workers,
            "equal_prices": args.equal_prices,
            "extra": list(extra),
        }
    )


def _output_root(args: argparse.Namespace) -> Path:
    return Path(args.output_dir) if args.output_dir else default_output_dir()


# -----------------------------------------------------------------------------


def cmd_solve(args: argparse.Namespace) -> int:
    sequence = DecisionSequence(args.sequence.replace("-", "_"))
    scenario = _load(args, decision_sequence=sequence.value)
    manifest = _manifest(args, "solve", scenario)
    settings = _settings(args)

    result = run_sequence(scenario, settings)
    metrics = compute_metrics(result)
    sizing = sizing_report(scenario)
    run_hash = _run_hash(result.fingerprint, args, sequence.value)
    with ArtifactStorage(_output_root(args), "solve", run_hash) as storage:
        for name, frame in result.tables().items():
            storage.save_table(name, frame)

        storage.save_table("metrics", metrics.to_frame())
        storage.save_table("adn_sizing", sizing.to_frame())
        storage.save_json(
            "solve_report",
            {
                "sequence": sequence.value,
                "fingerprint": result.fingerprint,
                "total_dso_cost": result.total_cost,
                "tn_cost": result.tn_cost,
                "stats": result.stats,
                "checks": result.checks,
                "sizing": sizing.to_dict(),
            },
        )
        if result.solution:
            storage.save_json("solution", result.solution)

        if result.node_log:
            storage.save_log("nodes", result.node_log)

        manifest.status = str(result.stats.get("status", ""))
        manifest.summary = {"total_dso_cost": result.total_cost, "gap": result.stats.get("gap")}
        storage.save_manifest(manifest)

    print_summary({"output_dir": str(storage.storage_dir), **manifest.summary})
    return EXIT_LIMIT if result.limit_reached else EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    if args.name not in EXPERIMENTS:
        _LOGGER.error("Unknown experiment %s (expected one of: %s)", args.name, ", ".join(EXPERIMENTS))
        return EXIT_ERROR

    scenario = _load(args)
    manifest = _manifest(args, f"experiment {args.name}", scenario)
    settings = _settings(args)
    tables: Dict[str, Any] = {}
    summary: Dict[str, Any] = {}
    extra: List[Any] = []

    if args.name == "compare-sequence":
        comparison = compare_sequences(scenario, settings)
        tables["sequence_comparison"] = comparison.to_frame()
        tables["metrics_dso_first"] = compute_metrics(comparison.dso_first).to_frame()
        tables["metrics_tso_first"] = compute_metrics(comparison.tso_first).to_frame()
        tables["soc_dso_first"] = comparison.dso_first.tables()["soc"]
        tables["soc_tso_first"] = comparison.tso_first.tables()["soc"]
        summary = {
            "cost_dso_first": comparison.dso_first.total_cost,
            "cost_tso_first": comparison.tso_first.total_cost,
            "cost_increase_percent": comparison.cost_increase,
        }
    elif args.name == "competition":
        competition = run_competition(scenario, settings)
        tables["competition"] = competition.deltas()
        tables["competition_costs"] = competition.costs()
    elif args.name == "congestion":
        congestion = run_congestion_study(scenario, settings)
        tables["congestion"] = congestion.to_frame()
        tables["congestion_long"] = congestion.long_frame()
        summary = {"max_reduction_percent": float(np.max(congestion.reductions, initial=0.0))}
    else:
        counts = parse_counts(args.counts)
        extra = [counts, args.size_only]
        scaling = run_scaling_study(scenario, counts, settings, solve=not args.size_only)
        tables["scaling"] = scaling.to_frame()
        if not args.size_only:
            summary = {"fitted_exponent": scaling.exponent}

    run_hash = _run_hash(fingerprint(scenario), args, *extra)
    with ArtifactStorage(_output_root(args), args.name, run_hash) as storage:
        for name, frame in tables.items():
            storage.save_table(name, frame)

        storage.save_json("summary", summary)
        manifest.status = "done"
        manifest.summary = summary
        storage.save_manifest(manifest)

    print_summary({"output_dir": str(storage.storage_dir), **summary})
    return EXIT_OK


# -----------------------------------------------------------------------------


class CheckLog:
    """Worst value per named check against its tolerance"""

    def __init__(self) -> None:
        self.checks: Dict[str, Dict[str, Any]] = {}

    def add(self, name: str, value: float, tol: float) -> None:
        check = self.checks.setdefault(name, {"instances": 0, "worst": 0.0, "tol": tol})
        check["instances"] += 1
        if not np.isfinite(value) or value > check["worst"]:
            check["worst"] = float(value)

    def fail(self, name: str, message: str) -> None:
        check = self.checks.setdefault(name, {"instances": 0, "worst": 0.0, "tol": 0.0})
        check["instances"] += 1
        check.setdefault("errors", []).append(message)

    @property
    def ok(self) -> bool:
        return all(self.passed(name) for name in self.checks)

    def passed(self, name: str) -> bool:
        check = self.checks[name]
        return (not check.get("errors")) and bool(check["worst"] <= check["tol"])

    def report(self) -> Dict[str, Any]:
        return {
            name: {**check, "passed": self.passed(name)}
            for name, check in sorted(self.checks.items())
        }


def verify_kkt(log: CheckLog, count: int, seed: int) -> None:
    """Single-level TSO projection against the direct solve at fixed exchanges"""
    for k, (scenario, fixing) in enumerate(random_transmission_suite(count, seed)):
        tn_prog = build_tn_program(scenario.tn, scenario.cfg, boundary_fixing=fixing)
        direct = solve_tn_direct(tn_prog)
        model = assemble_single_level(
            tn_prog, [], derive_kkt(tn_prog), scenario.cfg, couple=False
        )
        try:
            solution = solve_active_set(model, direct)
        except NotSolved as e:
            log.fail("kkt_vs_direct", f"instance {k}: {e}")
            continue

        log.add("kkt_vs_direct", relative_gap(solution.tn_cost(), direct.objective), 1e-6)


def verify_micro(log: CheckLog, count: int, seed: int, big_m_shrink: Optional[float]) -> None:
    """Branch-and-bound against enumeration, plus residual checks on every optimum"""
    for k, scenario in enumerate(micro_suite(count, seed)):
        tn, adns, cfg = scenario
        tn_prog = build_tn_program(tn, cfg)
        adn_progs = [build_adn_program(dn, cfg) for dn in adns]
        kkt = derive_kkt(tn_prog)
        model = assemble_single_level(tn_prog, adn_progs, kkt, cfg)
        try:
            reference, _x = brute_force_enumerate(model, cap=DEFAULT_BRUTE_FORCE_CAP)
        except TooManyBinaries as e:
            _LOGGER.warning("Micro instance %s skipped: %s", k, e)
            continue

        report = solve_bnb(model, opts=BnbOptions(gap_tol=_EXACT_GAP))
        assert report.x is not None
        log.add("bnb_vs_enumeration", abs(report.objective - reference), 1e-6)

        solution = model.solution(report.x)
        log.add("kkt_soundness", check_kkt_soundness(solution).relative_gap, 1e-6)
        checks = adn_checks(solution.adn_solutions(), cfg)
        log.add("conservation", checks["conservation"], 1e-6)
        log.add("battery_recursion", checks["battery_recursion"], 1e-8)
        log.add("p2p_clearing", checks["p2p_clearing"], 1e-7)
        log.add("exclusivity", checks["exclusivity_violations"], 0.0)
        log.add("cone_residual", checks["cone_residual"], cfg.tolerances.cone)

        if big_m_shrink is not None:
            shrunk = assemble_single_level(
                tn_prog, adn_progs, kkt, cfg, big_m=model.linearized.big_m.shrunk(big_m_shrink)
            )
            try:
                shrunk_objective, _x = brute_force_enumerate(shrunk, cap=DEFAULT_BRUTE_FORCE_CAP)
                log.add("shrunk_big_m", abs(shrunk_objective - reference), 1e-6)
            except Infeasible:
                log.fail("shrunk_big_m", f"instance {k}: infeasible with the shrunk Big-M")


def verify_scenario(log: CheckLog, scenario: Scenario, settings: SolveSettings) -> None:
    result = run_sequence(scenario, settings)
    log.add("conservation", result.checks["conservation"], 1e-6)
    log.add("battery_recursion", result.checks["battery_recursion"], 1e-8)
    log.add("p2p_clearing", result.checks["p2p_clearing"], 1e-7)
    log.add("exclusivity", result.checks["exclusivity_violations"], 0.0)
    log.add("cone_residual", result.checks["cone_residual"], scenario.cfg.tolerances.cone)


def cmd_verify(args: argparse.Namespace) -> int:
    log = CheckLog()
    if args.config:
        scenario = _load(args)
        verify_scenario(log, scenario, _settings(args))

    if args.micro_suite or not args.config:
        verify_kkt(log, args.count * 2, args.seed)
        verify_micro(log, args.count, args.seed, args.big_m_shrink)

    report = log.report()
    print_summary({"passed": log.ok, "checks": report})
    for name, check in report.items():
        if not check["passed"]:
            _LOGGER.error("Check %s failed: worst %.3g > %.3g", name, check["worst"], check["tol"])

    return EXIT_OK if log.ok else EXIT_ERROR


# -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsoled")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--debug", action="store_true", help="Print DEBUG messages to console"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve_parser = subparsers.add_parser("solve", help="Solve one scenario")
    solve_parser.add_argument("config", help="Case bundle, scenario file or embedded name")
    solve_parser.add_argument(
        "--sequence",
        choices=["dso-first", "tso-first"],
        default="dso-first",
        help="Decision sequence (default: dso-first)",
    )
    _add_solve_args(solve_parser)
    solve_parser.set_defaults(func=cmd_solve)

    experiment_parser = subparsers.add_parser("experiment", help="Run a study pipeline")
    experiment_parser.add_argument("name", help=f"One of: {', '.join(EXPERIMENTS)}")
    experiment_parser.add_argument("config", help="Case bundle, scenario file or embedded name")
    experiment_parser.add_argument(
        "--counts", default="1..5", help="ADN counts of the scaling study (default: 1..5)"
    )
    experiment_parser.add_argument(
        "--size-only",
        "--size_only",
        action="store_true",
        help="Report model sizes without solving",
    )
    _add_solve_args(experiment_parser)
    experiment_parser.set_defaults(func=cmd_experiment)

    verify_parser = subparsers.add_parser("verify", help="Run the verification checks")
    verify_parser.add_argument("config", nargs="?", help="Scenario to verify")
    verify_parser.add_argument(
        "--micro-suite", "--micro_suite", action="store_true", help="Run the micro suite"
    )
    verify_parser.add_argument(
        "--count", type=int, default=10, help="Micro instances (default: 10)"
    )
    verify_parser.add_argument("--seed", type=int, default=0, help="Base seed (default: 0)")
    verify_parser.add_argument(
        "--big-m-shrink",
        "--big_m_shrink",
        type=float,
        help="Also enumerate with Big-M constants scaled by this factor",
    )
    _add_solve_args(verify_parser)
    verify_parser.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.debug)
    _LOGGER.debug(args)

    try:
        return args.func(args)
    except DOMAIN_ERRORS as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


# -----------------------------------------------------------------------------

if __name__ == "__main__":
    sys.exit(main())
