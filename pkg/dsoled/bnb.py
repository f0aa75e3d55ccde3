"""Branch-and-bound over the binary variables of a conic program"""
import itertools
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .conic import (
    ConicSubproblemSolver,
    CvxpySolver,
    SubproblemResult,
    mixed_integer_solver,
    solve_mixed_integer,
)
from .const import (
    DEFAULT_BRUTE_FORCE_CAP,
    DEFAULT_FEASIBILITY_TOL,
    DEFAULT_GAP_TOL,
    DEFAULT_INTEGRALITY_TOL,
)
from .program import (
    CanonicalConvexProgram,
    complete_binaries,
    completion_rows,
    propagate_bounds,
)
from .transmission import Infeasible, NotSolved, infeasibility_report

_LOGGER = logging.getLogger(__name__)

# Above this many free binaries the "auto" engine hands over to a native backend
NATIVE_THRESHOLD = 200


class Engine(str, Enum):
    AUTO = "auto"
    BNB = "bnb"
    NATIVE = "native"


class BnbStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"


class TooManyBinaries(Exception):
    pass


class LimitReached(Exception):
    def __init__(self, report: "BnbReport") -> None:
        super().__init__(
            f"Limit reached ({report.status.value}) after {report.nodes} node(s), "
            f"gap {report.gap:.3g}"
        )
        self.report = report


@dataclass(frozen=True)
class BnbOptions:
    gap_tol: float = DEFAULT_GAP_TOL
    """Relative gap (incumbent - bound) / max(1, |incumbent|)"""

    feasibility_tol: float = DEFAULT_FEASIBILITY_TOL
    integrality_tol: float = DEFAULT_INTEGRALITY_TOL
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    """Seconds"""

    deterministic: bool = True
    """Serial node processing in a fixed order"""

    workers: int = 1
    face_resolve: bool = True
    """Re-solve over the optimal face before branching"""

    keep_log: bool = True

    @staticmethod
    def from_dict(config: Dict[str, Any]) -> "BnbOptions":
        node_limit = config.get("node_limit")
        time_limit = config.get("time_limit")
        return BnbOptions(
            gap_tol=float(config.get("gap_tol", DEFAULT_GAP_TOL)),
            feasibility_tol=float(config.get("feasibility_tol", DEFAULT_FEASIBILITY_TOL)),
            integrality_tol=float(config.get("integrality_tol", DEFAULT_INTEGRALITY_TOL)),
            node_limit=None if node_limit is None else int(node_limit),
            time_limit=None if time_limit is None else float(time_limit),
            deterministic=bool(config.get("deterministic", True)),
            workers=int(config.get("workers", 1)),
            face_resolve=bool(config.get("face_resolve", True)),
        )


@dataclass
class BnbNode:
    id: int
    parent: Optional[int]
    depth: int
    bound: float
    lb: np.ndarray
    ub: np.ndarray
    fixing: Tuple[Tuple[int, float], ...] = ()
    """Branching decision that created the node"""


@dataclass(frozen=True)
class Decision:
    action: str
    """fathom_infeasible, fathom_bound, fathom_integral or branch"""

    bound: float = float("inf")
    variable: Optional[int] = None
    x: Optional[np.ndarray] = None


@dataclass
class BnbReport:
    status: BnbStatus
    objective: float
    x: Optional[np.ndarray]
    bound: float
    nodes: int
    seconds: float
    engine: str = Engine.BNB.value
    log: List[Dict[str, Any]] = field(default_factory=list)
    max_violation: float = float("nan")
    free_binaries: int = 0

    @property
    def gap(self) -> float:
        if self.x is None or not np.isfinite(self.objective):
            return float("inf")

        return max(0.0, (self.objective - self.bound) / max(1.0, abs(self.objective)))

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    def write_log(self, out: TextIO) -> None:
        for entry in self.log:
            print(json.dumps(entry, sort_keys=True), file=out)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "engine": self.engine,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "seconds": self.seconds,
            "max_violation": self.max_violation,
            "free_binaries": self.free_binaries,
        }


Model = Union[CanonicalConvexProgram, Any]


def _program_of(model: Model) -> CanonicalConvexProgram:
    return model if isinstance(model, CanonicalConvexProgram) else model.program


@dataclass(frozen=True)
class Preprocessed:
    lb: np.ndarray
    ub: np.ndarray
    infeasible: bool
    free_binaries: np.ndarray


def preprocess(prog: CanonicalConvexProgram) -> Preprocessed:
    """Bound propagation; binaries whose bounds meet are fixed"""
    result = propagate_bounds(prog)
    binaries = prog.binary_indices
    free = binaries[result.lb[binaries] < result.ub[binaries]] if not result.infeasible else binaries
    _LOGGER.debug(
        "Preprocessing fixed %s of %s binary(ies) in %s round(s)",
        len(binaries) - len(free),
        len(binaries),
        result.rounds,
    )

    return Preprocessed(result.lb, result.ub, result.infeasible, free)


def _face_weights(prog: CanonicalConvexProgram) -> np.ndarray:
    """Sum of the continuous parts of every row holding a binary, row-normalized"""
    g = prog.g_ineq.tocsr()
    binary = prog.binary_mask
    weights = np.zeros(prog.n_vars)
    coo = g.tocoo()
    rows = np.unique(coo.row[binary[coo.col]])
    for r in rows:
        start, end = g.indptr[r], g.indptr[r + 1]
        cols, vals = g.indices[start:end], g.data[start:end]
        scale = max(1.0, float(np.max(np.abs(vals))))
        continuous = ~binary[cols]
        np.add.at(weights, cols[continuous], vals[continuous] / scale)

    return weights


def branching_and_bounding_policy(
    node: BnbNode,
    relaxation: SubproblemResult,
    incumbent: float,
    prog: CanonicalConvexProgram,
    rows_of: Dict[int, List[Tuple[int, float]]],
    opts: BnbOptions,
) -> Decision:
    """Fathom (infeasible, bound, integral) or pick the branching variable"""
    if not relaxation.ok or relaxation.x is None:
        return Decision("fathom_infeasible")

    bound = max(node.bound, relaxation.objective)
    if bound >= incumbent - opts.gap_tol * max(1.0, abs(incumbent)):
        return Decision("fathom_bound", bound=bound)

    completed = complete_binaries(prog, relaxation.x, rows_of, opts.feasibility_tol)
    if completed is not None:
        return Decision("fathom_integral", bound=bound, x=completed)

    return Decision("branch", bound=bound, variable=most_fractional(prog, relaxation.x, node))


def most_fractional(prog: CanonicalConvexProgram, x: np.ndarray, node: BnbNode) -> int:
    """Free binary closest to 0.5; ties go to the lowest variable id"""
    binaries = prog.binary_indices
    free = binaries[node.lb[binaries] < node.ub[binaries]]
    assert free.size, "Branching without a free binary"

    values = x[free]
    distance = np.round(np.minimum(values - np.floor(values), np.ceil(values) - values), 9)
    return int(free[int(np.argmax(distance))])


class _Search:
    def __init__(
        self,
        prog: CanonicalConvexProgram,
        solver: ConicSubproblemSolver,
        opts: BnbOptions,
    ) -> None:
        self.prog = prog
        self.solver = solver
        self.opts = opts
        self.rows_of = completion_rows(prog)
        self.weights = _face_weights(prog) if opts.face_resolve else None
        self.incumbent = float("inf")
        self.incumbent_x: Optional[np.ndarray] = None
        self.log: List[Dict[str, Any]] = []
        self.nodes = 0
        self.next_id = 0
        self._lock = threading.Lock()

        workers = 1 if opts.deterministic else max(1, opts.workers)
        self.solvers: List[ConicSubproblemSolver] = [solver]
        for _ in range(workers - 1):
            clone = getattr(solver, "clone", None)
            self.solvers.append(clone() if clone is not None else solver)

    def new_node(
        self,
        parent: Optional[BnbNode],
        lb: np.ndarray,
        ub: np.ndarray,
        fixing: Tuple[Tuple[int, float], ...] = (),
    ) -> BnbNode:
        node = BnbNode(
            id=self.next_id,
            parent=None if parent is None else parent.id,
            depth=0 if parent is None else parent.depth + 1,
            bound=-float("inf") if parent is None else parent.bound,
            lb=lb,
            ub=ub,
            fixing=fixing,
        )
        self.next_id += 1
        return node

    def record(self, node: BnbNode, status: str, bound: float) -> None:
        if not self.opts.keep_log:
            return

        self.log.append(
            {
                "node": node.id,
                "parent": node.parent,
                "depth": node.depth,
                "fixing": [[self.prog.variables[v].name, value] for v, value in node.fixing],
                "bound": None if not np.isfinite(bound) else round(float(bound), 9),
                "status": status,
            }
        )

    def relax(self, node: BnbNode, solver: ConicSubproblemSolver) -> SubproblemResult:
        return solver.solve(self.prog, node.lb, node.ub)

    def face(self, node: BnbNode, bound: float, solver: ConicSubproblemSolver) -> Optional[np.ndarray]:
        solve_face = getattr(solver, "solve_face", None)
        if self.weights is None or solve_face is None or not np.any(self.weights):
            return None

        cap = bound + 1e-9 * max(1.0, abs(bound))
        result = solve_face(self.prog, self.weights, cap, node.lb, node.ub)
        if not result.ok or result.x is None:
            return None

        return complete_binaries(self.prog, result.x, self.rows_of, self.opts.feasibility_tol)

    def offer(self, x: np.ndarray) -> bool:
        objective = self.prog.objective_value(x)
        with self._lock:
            if objective < self.incumbent:
                self.incumbent = objective
                self.incumbent_x = x
                return True

        return False

    def children(self, node: BnbNode, variable: int, value: float) -> List[BnbNode]:
        """Down and up children, the one nearer the relaxation value last"""
        kids = []
        for side in (0.0, 1.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[variable] = ub[variable] = side
            bounds = propagate_bounds(self.prog, lb, ub)
            child = self.new_node(node, bounds.lb, bounds.ub, ((variable, side),))
            if bounds.infeasible:
                self.record(child, "fathom_infeasible", child.bound)
                continue

            kids.append(child)

        preferred = 1.0 if value >= 0.5 else 0.0
        kids.sort(key=lambda k: k.fixing[0][1] == preferred)
        return kids


def solve_bnb(
    model: Model,
    solver: Optional[ConicSubproblemSolver] = None,
    opts: Optional[BnbOptions] = None,
) -> BnbReport:
    """Best-bound branch-and-bound with depth-first plunging until the first incumbent.

    Raises:
        Infeasible: the root is infeasible
        LimitReached: node or time limit hit (the report carries any incumbent)
    """
    prog = _program_of(model)
    opts = opts or BnbOptions()
    solver = solver or CvxpySolver()
    start_time = time.monotonic()

    pre = preprocess(prog)
    if pre.infeasible:
        raise Infeasible(infeasibility_report(prog, solver))

    search = _Search(prog, solver, opts)
    root = search.new_node(None, pre.lb, pre.ub)
    open_nodes: List[BnbNode] = [root]
    status = BnbStatus.OPTIMAL
    root_checked = False

    def elapsed() -> float:
        return time.monotonic() - start_time

    def best_open_bound() -> float:
        return min((n.bound for n in open_nodes), default=float("inf"))

    def select() -> BnbNode:
        if search.incumbent_x is None:
            return open_nodes.pop()

        k = min(range(len(open_nodes)), key=lambda i: (open_nodes[i].bound, open_nodes[i].id))
        return open_nodes.pop(k)

    while open_nodes:
        if search.incumbent_x is not None:
            gap_bound = min(best_open_bound(), search.incumbent)
            gap = (search.incumbent - gap_bound) / max(1.0, abs(search.incumbent))
            if gap <= opts.gap_tol:
                break

        if opts.node_limit is not None and search.nodes >= opts.node_limit:
            status = BnbStatus.NODE_LIMIT
            break

        if opts.time_limit is not None and elapsed() >= opts.time_limit:
            status = BnbStatus.TIME_LIMIT
            break

        batch_size = len(search.solvers) if search.incumbent_x is not None else 1
        batch = [select() for _ in range(min(batch_size, len(open_nodes)))]
        if len(batch) == 1:
            results = [search.relax(batch[0], search.solvers[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(batch)) as pool:
                results = list(
                    pool.map(search.relax, batch, search.solvers[: len(batch)])
                )

        for node, relaxation in zip(batch, results):
            search.nodes += 1
            decision = branching_and_bounding_policy(
                node, relaxation, search.incumbent, prog, search.rows_of, opts
            )

            if not root_checked:
                root_checked = True
                if decision.action == "fathom_infeasible":
                    search.record(node, decision.action, node.bound)
                    if relaxation.status.value == "error":
                        raise NotSolved("Root relaxation failed")

                    raise Infeasible(infeasibility_report(prog, solver))

            if decision.action == "branch":
                node.bound = decision.bound
                assert decision.variable is not None
                face_x = search.face(node, decision.bound, search.solvers[0])
                if face_x is not None:
                    decision = Decision("fathom_integral", bound=decision.bound, x=face_x)

            search.record(node, decision.action, decision.bound)
            if decision.action == "fathom_integral":
                assert decision.x is not None
                if search.offer(decision.x):
                    _LOGGER.debug(
                        "Node %s: incumbent %.10g at depth %s",
                        node.id,
                        search.incumbent,
                        node.depth,
                    )
            elif decision.action == "branch":
                assert relaxation.x is not None and decision.variable is not None
                value = float(relaxation.x[decision.variable])
                open_nodes.extend(search.children(node, decision.variable, value))

        if search.incumbent_x is not None:
            threshold = search.incumbent - opts.gap_tol * max(1.0, abs(search.incumbent))
            open_nodes = [n for n in open_nodes if n.bound < threshold]

    bound = min(best_open_bound(), search.incumbent)
    if search.incumbent_x is None and status == BnbStatus.OPTIMAL:
        status = BnbStatus.INFEASIBLE
        bound = float("inf")

    report = BnbReport(
        status=status,
        objective=search.incumbent,
        x=search.incumbent_x,
        bound=bound,
        nodes=search.nodes,
        seconds=elapsed(),
        log=search.log,
        free_binaries=len(pre.free_binaries),
    )
    if report.x is not None:
        report.max_violation = prog.evaluate(report.x).max_violation

    _LOGGER.debug(
        "Branch-and-bound %s: objective %.10g, bound %.10g, %s node(s), %.2fs",
        status.value,
        report.objective,
        report.bound,
        report.nodes,
        report.seconds,
    )

    if status in (BnbStatus.NODE_LIMIT, BnbStatus.TIME_LIMIT):
        raise LimitReached(report)

    if status == BnbStatus.INFEASIBLE:
        raise Infeasible(infeasibility_report(prog, solver))

    return report


def brute_force_enumerate(
    model: Model,
    solver: Optional[ConicSubproblemSolver] = None,
    cap: int = DEFAULT_BRUTE_FORCE_CAP,
) -> Tuple[float, np.ndarray]:
    """Exact optimum over every assignment of the free binaries"""
    prog = _program_of(model)
    solver = solver or CvxpySolver()
    pre = preprocess(prog)
    if pre.infeasible:
        raise Infeasible(infeasibility_report(prog, solver))

    free = pre.free_binaries
    if len(free) > cap:
        raise TooManyBinaries(f"{len(free)} free binaries exceed the cap of {cap}")

    best, best_x = float("inf"), None
    for values in itertools.product((0.0, 1.0), repeat=len(free)):
        lb, ub = pre.lb.copy(), pre.ub.copy()
        lb[free] = ub[free] = values
        bounds = propagate_bounds(prog, lb, ub)
        if bounds.infeasible:
            continue

        result = solver.solve(prog, bounds.lb, bounds.ub)
        if result.ok and result.x is not None and result.objective < best:
            best, best_x = result.objective, result.x

    _LOGGER.debug("Enumerated %s assignment(s): best %.10g", 2 ** len(free), best)
    if best_x is None:
        raise Infeasible(infeasibility_report(prog, solver))

    return best, best_x


def solve_native(model: Model, opts: Optional[BnbOptions] = None) -> BnbReport:
    """Whole program, integrality included, handed to a mixed-integer backend"""
    prog = _program_of(model)
    opts = opts or BnbOptions()
    name = mixed_integer_solver()
    if name is None:
        raise NotSolved("No mixed-integer conic backend is installed")

    start_time = time.monotonic()
    result, bound = solve_mixed_integer(prog, name, time_limit=opts.time_limit)
    seconds = time.monotonic() - start_time
    if result.status.value == "infeasible":
        raise Infeasible(infeasibility_report(prog))

    if not result.ok or result.x is None:
        raise NotSolved(f"{name} returned {result.status.value}")

    report = BnbReport(
        status=BnbStatus.OPTIMAL,
        objective=result.objective,
        x=result.x,
        bound=result.objective if bound is None else float(bound),
        nodes=1,
        seconds=seconds,
        engine=f"{Engine.NATIVE.value}:{name}",
        max_violation=prog.evaluate(result.x).max_violation,
        free_binaries=len(prog.binary_indices),
    )
    if opts.time_limit is not None and seconds >= opts.time_limit and report.gap > opts.gap_tol:
        report.status = BnbStatus.TIME_LIMIT
        raise LimitReached(report)

    return report


def solve_model(
    model: Model,
    engine: Union[Engine, str] = Engine.AUTO,
    solver: Optional[ConicSubproblemSolver] = None,
    opts: Optional[BnbOptions] = None,
) -> BnbReport:
    engine = Engine(engine)
    prog = _program_of(model)
    if engine == Engine.AUTO:
        many = len(prog.binary_indices) > NATIVE_THRESHOLD
        engine = Engine.NATIVE if (many and mixed_integer_solver()) else Engine.BNB

    if engine == Engine.NATIVE:
        return solve_native(model, opts)

    return solve_bnb(model, solver, opts)


def free_binary_names(prog: CanonicalConvexProgram, free: Sequence[int]) -> List[str]:
    return [prog.variables[i].name for i in free]
