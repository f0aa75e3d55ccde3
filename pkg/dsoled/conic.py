"""Continuous conic subproblem solvers"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Optional, Protocol, Tuple

import cvxpy as cp
import numpy as np

from .const import DEFAULT_CONIC_SOLVER
from .program import CanonicalConvexProgram

_LOGGER = logging.getLogger(__name__)

# Tight interior-point tolerances; Big-M rows amplify residuals
_DEFAULT_OPTIONS: Dict[str, Dict[str, Any]] = {
    "CLARABEL": {
        "tol_feas": 1e-9,
        "tol_gap_abs": 1e-9,
        "tol_gap_rel": 1e-9,
        "max_iter": 500,
    },
    "ECOS": {"abstol": 1e-9, "reltol": 1e-9, "feastol": 1e-9},
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 200000},
}

# Mixed-integer capable backends, in order of preference
MIXED_INTEGER_SOLVERS = ("GUROBI", "MOSEK", "SCIP", "CPLEX", "XPRESS")


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ERROR = "error"


@dataclass
class SubproblemResult:
    status: SolveStatus
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    """lambda, registry convention L = f + lambda'(Ax - b)"""

    ineq_duals: Optional[np.ndarray] = None
    """mu >= 0 for Gx <= h"""

    lb_duals: Optional[np.ndarray] = None
    """nu >= 0 for x >= lb (zero where lb is infinite)"""

    ub_duals: Optional[np.ndarray] = None
    """omega >= 0 for x <= ub (zero where ub is infinite)"""

    solve_seconds: float = 0.0
    inaccurate: bool = False

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


class ConicSubproblemSolver(Protocol):
    """Solves the continuous relaxation of a program under bound overrides"""

    supports_quadratic: bool
    supports_soc: bool

    def solve(
        self,
        prog: CanonicalConvexProgram,
        lb: Optional[np.ndarray] = None,
        ub: Optional[np.ndarray] = None,
    ) -> SubproblemResult:
        ...


@dataclass
class _CompiledProblem:
    problem: cp.Problem
    x: cp.Variable
    lb_param: cp.Parameter
    ub_param: cp.Parameter
    lb_idx: np.ndarray
    ub_idx: np.ndarray
    eq_constraint: Optional[cp.Constraint]
    ineq_constraint: Optional[cp.Constraint]
    lb_constraint: Optional[cp.Constraint]
    ub_constraint: Optional[cp.Constraint]
    cap_param: Optional[cp.Parameter] = None


@dataclass
class CvxpySolver:
    """ConicSubproblemSolver backed by cvxpy.

    Each program is compiled once; bounds enter as DPP parameters so that
    branch-and-bound nodes only update parameter values.
    """

    solver: str = DEFAULT_CONIC_SOLVER
    options: Dict[str, Any] = field(default_factory=dict)
    warm_start: bool = True
    supports_quadratic: bool = True
    supports_soc: bool = True

    def __post_init__(self) -> None:
        self._cache: Dict[
            Tuple[int, str], Tuple[CanonicalConvexProgram, _CompiledProblem]
        ] = {}

    @property
    def solver_options(self) -> Dict[str, Any]:
        options = dict(_DEFAULT_OPTIONS.get(self.solver, {}))
        options.update(self.options)
        return options

    def clone(self) -> "CvxpySolver":
        return CvxpySolver(self.solver, dict(self.options), self.warm_start)

    def _compiled(
        self, prog: CanonicalConvexProgram, objective_weights: Optional[np.ndarray] = None
    ) -> _CompiledProblem:
        key = (id(prog), "face" if objective_weights is not None else "main")
        entry = self._cache.get(key)
        if (entry is None) or (entry[0] is not prog):
            # Only the program currently being solved stays compiled
            self._cache = {
                k: v for k, v in self._cache.items() if v[0] is prog
            }
            entry = (prog, _compile(prog, objective_weights))
            self._cache[key] = entry

        return entry[1]

    def solve(
        self,
        prog: CanonicalConvexProgram,
        lb: Optional[np.ndarray] = None,
        ub: Optional[np.ndarray] = None,
    ) -> SubproblemResult:
        compiled = self._compiled(prog)
        return self._run(prog, compiled, lb, ub)

    def solve_face(
        self,
        prog: CanonicalConvexProgram,
        weights: np.ndarray,
        objective_cap: float,
        lb: Optional[np.ndarray] = None,
        ub: Optional[np.ndarray] = None,
    ) -> SubproblemResult:
        """min weights'x over the optimal face {x feasible, f(x) <= objective_cap}"""
        compiled = self._compiled(prog, objective_weights=weights)
        assert compiled.cap_param is not None
        compiled.cap_param.value = float(objective_cap)
        result = self._run(prog, compiled, lb, ub)
        if result.x is not None:
            result.objective = prog.objective_value(result.x)

        return result

    def _run(
        self,
        prog: CanonicalConvexProgram,
        compiled: _CompiledProblem,
        lb: Optional[np.ndarray],
        ub: Optional[np.ndarray],
    ) -> SubproblemResult:
        lb = prog.lb if lb is None else lb
        ub = prog.ub if ub is None else ub
        if np.any(lb > ub):
            return SubproblemResult(SolveStatus.INFEASIBLE)

        if compiled.lb_idx.size:
            values = lb[compiled.lb_idx]
            assert np.all(np.isfinite(values)), "Bound override on a free side"
            compiled.lb_param.value = values

        if compiled.ub_idx.size:
            values = ub[compiled.ub_idx]
            assert np.all(np.isfinite(values)), "Bound override on a free side"
            compiled.ub_param.value = values

        start_time = time.monotonic()
        try:
            compiled.problem.solve(
                solver=self.solver, warm_start=self.warm_start, **self.solver_options
            )
        except cp.error.SolverError:
            _LOGGER.debug("Solver %s failed", self.solver, exc_info=True)
            return SubproblemResult(
                SolveStatus.ERROR, solve_seconds=time.monotonic() - start_time
            )

        seconds = time.monotonic() - start_time
        status = compiled.problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SubproblemResult(SolveStatus.INFEASIBLE, solve_seconds=seconds)

        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SubproblemResult(SolveStatus.UNBOUNDED, solve_seconds=seconds)

        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or compiled.x.value is None:
            return SubproblemResult(SolveStatus.ERROR, solve_seconds=seconds)

        x = np.asarray(compiled.x.value, dtype=float).copy()
        sign = equality_dual_sign(self.solver)
        eq_duals = np.zeros(prog.n_eq)
        if compiled.eq_constraint is not None:
            eq_duals = sign * _dual(compiled.eq_constraint, prog.n_eq)

        ineq_duals = np.zeros(prog.n_ineq)
        if compiled.ineq_constraint is not None:
            ineq_duals = _dual(compiled.ineq_constraint, prog.n_ineq)

        lb_duals = np.zeros(prog.n_vars)
        if compiled.lb_constraint is not None:
            lb_duals[compiled.lb_idx] = _dual(compiled.lb_constraint, compiled.lb_idx.size)

        ub_duals = np.zeros(prog.n_vars)
        if compiled.ub_constraint is not None:
            ub_duals[compiled.ub_idx] = _dual(compiled.ub_constraint, compiled.ub_idx.size)

        return SubproblemResult(
            status=SolveStatus.OPTIMAL,
            objective=prog.objective_value(x),
            x=x,
            eq_duals=eq_duals,
            ineq_duals=ineq_duals,
            lb_duals=lb_duals,
            ub_duals=ub_duals,
            solve_seconds=seconds,
            inaccurate=(status == cp.OPTIMAL_INACCURATE),
        )


def _dual(constraint: cp.Constraint, size: int) -> np.ndarray:
    value = constraint.dual_value
    if value is None:
        return np.zeros(size)

    return np.asarray(value, dtype=float).reshape(size)


def _compile(
    prog: CanonicalConvexProgram, face_weights: Optional[np.ndarray] = None
) -> _CompiledProblem:
    n = prog.n_vars
    x = cp.Variable(n)
    lb_idx = np.flatnonzero(np.isfinite(prog.lb) | prog.binary_mask)
    ub_idx = np.flatnonzero(np.isfinite(prog.ub) | prog.binary_mask)
    lb_param = cp.Parameter(max(lb_idx.size, 1))
    ub_param = cp.Parameter(max(ub_idx.size, 1))

    constraints = []
    eq_constraint = ineq_constraint = lb_constraint = ub_constraint = None
    if prog.n_eq:
        eq_constraint = prog.a_eq @ x == prog.b_eq
        constraints.append(eq_constraint)

    if prog.n_ineq:
        ineq_constraint = prog.g_ineq @ x <= prog.h_ineq
        constraints.append(ineq_constraint)

    if lb_idx.size:
        lb_constraint = x[lb_idx] >= lb_param
        constraints.append(lb_constraint)

    if ub_idx.size:
        ub_constraint = x[ub_idx] <= ub_param
        constraints.append(ub_constraint)

    cones = prog.cones
    if len(cones):
        l_var, v_var = x[cones.l_idx], x[cones.v_idx]
        constraints.append(
            cp.SOC(
                l_var + v_var,
                cp.vstack([2 * x[cones.p_idx], 2 * x[cones.q_idx], l_var - v_var]),
                axis=0,
            )
        )

    objective = prog.c @ x + prog.constant
    quad_idx = np.flatnonzero(prog.q_diag)
    if quad_idx.size:
        objective = objective + 0.5 * (prog.q_diag[quad_idx] @ cp.square(x[quad_idx]))

    cap_param = None
    if face_weights is not None:
        cap_param = cp.Parameter()
        constraints.append(objective <= cap_param)
        objective = face_weights @ x

    problem = cp.Problem(cp.Minimize(objective), constraints)
    return _CompiledProblem(
        problem=problem,
        x=x,
        lb_param=lb_param,
        ub_param=ub_param,
        lb_idx=lb_idx,
        ub_idx=ub_idx,
        eq_constraint=eq_constraint,
        ineq_constraint=ineq_constraint,
        lb_constraint=lb_constraint,
        ub_constraint=ub_constraint,
        cap_param=cap_param,
    )


@lru_cache(maxsize=None)
def equality_dual_sign(solver: str) -> float:
    """Sign mapping the backend's equality duals onto L = f + lambda'(Ax - b).

    Probe: min x s.t. x = 1 has stationarity 1 + lambda = 0, so lambda = -1.
    """
    x = cp.Variable(1)
    constraint = x == np.ones(1)
    problem = cp.Problem(cp.Minimize(cp.sum(x)), [constraint])
    try:
        problem.solve(solver=solver)
    except cp.error.SolverError:
        _LOGGER.warning("Dual sign probe failed for %s; assuming cvxpy default", solver)
        return -1.0

    value = float(np.asarray(constraint.dual_value).ravel()[0])
    sign = -1.0 if value > 0 else 1.0
    _LOGGER.debug("Equality dual sign for %s: %s", solver, sign)
    return sign


def mixed_integer_solver() -> Optional[str]:
    installed = set(cp.installed_solvers())
    for name in MIXED_INTEGER_SOLVERS:
        if name in installed:
            return name

    return None


def solve_mixed_integer(
    prog: CanonicalConvexProgram,
    solver: str,
    options: Optional[Dict[str, Any]] = None,
    time_limit: Optional[float] = None,
) -> Tuple[SubproblemResult, Optional[float]]:
    """Hands the whole program, integrality included, to a mixed-integer backend.

    Returns the result and the backend's best bound (if reported).
    """
    n = prog.n_vars
    x = cp.Variable(n)
    binaries = prog.binary_indices
    constraints = []
    if prog.n_eq:
        constraints.append(prog.a_eq @ x == prog.b_eq)

    if prog.n_ineq:
        constraints.append(prog.g_ineq @ x <= prog.h_ineq)

    lb_idx = np.flatnonzero(np.isfinite(prog.lb))
    ub_idx = np.flatnonzero(np.isfinite(prog.ub))
    if lb_idx.size:
        constraints.append(x[lb_idx] >= prog.lb[lb_idx])

    if ub_idx.size:
        constraints.append(x[ub_idx] <= prog.ub[ub_idx])

    if binaries.size:
        z = cp.Variable(binaries.size, boolean=True)
        constraints.append(x[binaries] == z)

    cones = prog.cones
    if len(cones):
        l_var, v_var = x[cones.l_idx], x[cones.v_idx]
        constraints.append(
            cp.SOC(
                l_var + v_var,
                cp.vstack([2 * x[cones.p_idx], 2 * x[cones.q_idx], l_var - v_var]),
                axis=0,
            )
        )

    objective = prog.c @ x + prog.constant
    quad_idx = np.flatnonzero(prog.q_diag)
    if quad_idx.size:
        objective = objective + 0.5 * (prog.q_diag[quad_idx] @ cp.square(x[quad_idx]))

    problem = cp.Problem(cp.Minimize(objective), constraints)
    kwargs = dict(options or {})
    if time_limit is not None and solver == "GUROBI":
        kwargs.setdefault("TimeLimit", time_limit)
    elif time_limit is not None and solver == "SCIP":
        kwargs.setdefault("scip_params", {"limits/time": time_limit})

    start_time = time.monotonic()
    try:
        problem.solve(solver=solver, **kwargs)
    except cp.error.SolverError:
        _LOGGER.debug("Mixed-integer solver %s failed", solver, exc_info=True)
        return SubproblemResult(SolveStatus.ERROR), None

    seconds = time.monotonic() - start_time
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SubproblemResult(SolveStatus.INFEASIBLE, solve_seconds=seconds), None

    if problem.status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return SubproblemResult(SolveStatus.UNBOUNDED, solve_seconds=seconds), None

    if x.value is None:
        return SubproblemResult(SolveStatus.ERROR, solve_seconds=seconds), None

    values = np.asarray(x.value, dtype=float).copy()
    if binaries.size:
        values[binaries] = np.round(values[binaries])

    bound = None
    stats = problem.solver_stats
    if stats is not None and getattr(stats, "extra_stats", None) is not None:
        bound = getattr(stats.extra_stats, "ObjBound", None)

    return (
        SubproblemResult(
            status=SolveStatus.OPTIMAL,
            objective=prog.objective_value(values),
            x=values,
            solve_seconds=seconds,
            inaccurate=(problem.status == cp.OPTIMAL_INACCURATE),
        ),
        bound,
    )
