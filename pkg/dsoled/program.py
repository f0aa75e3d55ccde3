"""Canonical matrix-form convex programs with a variable/row registry"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, vstack

_LOGGER = logging.getLogger(__name__)

INF = float("inf")

Coeffs = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


@dataclass(frozen=True)
class VariableInfo:
    name: str
    kind: str
    index: Tuple
    owner: str
    binary: bool = False


@dataclass(frozen=True)
class RowTag:
    family: str
    index: Tuple
    owner: str = ""

    def __str__(self) -> str:
        index = ",".join(str(i) for i in self.index)
        prefix = f"{self.owner}." if self.owner else ""
        return f"{prefix}{self.family}[{index}]"


@dataclass(frozen=True)
class ConeBlocks:
    """Rotated cones l * v >= p^2 + q^2, one per entry"""

    l_idx: np.ndarray
    v_idx: np.ndarray
    p_idx: np.ndarray
    q_idx: np.ndarray
    tags: Tuple[RowTag, ...] = ()

    def __len__(self) -> int:
        return len(self.l_idx)

    @staticmethod
    def empty() -> "ConeBlocks":
        none = np.zeros(0, dtype=int)
        return ConeBlocks(none, none, none, none, ())

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """l * v - (p^2 + q^2) per cone"""
        return x[self.l_idx] * x[self.v_idx] - (
            np.square(x[self.p_idx]) + np.square(x[self.q_idx])
        )

    def soc_violations(self, x: np.ndarray) -> np.ndarray:
        """||(2p, 2q, l - v)|| - (l + v), positive when outside the cone"""
        lhs = np.sqrt(
            np.square(2 * x[self.p_idx])
            + np.square(2 * x[self.q_idx])
            + np.square(x[self.l_idx] - x[self.v_idx])
        )
        return lhs - (x[self.l_idx] + x[self.v_idx])


@dataclass(frozen=True)
class Evaluation:
    """Independent replay of a point against every constraint"""

    max_violation: float
    by_kind: Dict[str, float]
    worst: str

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol


@dataclass(frozen=True)
class CanonicalConvexProgram:
    """min 1/2 x'diag(q)x + c'x + constant
    s.t. A x = b, G x <= h, lb <= x <= ub, rotated cones, some x binary"""

    variables: Tuple[VariableInfo, ...]
    q_diag: np.ndarray
    c: np.ndarray
    constant: float
    a_eq: csr_matrix
    b_eq: np.ndarray
    eq_tags: Tuple[RowTag, ...]
    g_ineq: csr_matrix
    h_ineq: np.ndarray
    ineq_tags: Tuple[RowTag, ...]
    lb: np.ndarray
    ub: np.ndarray
    cones: ConeBlocks = field(default_factory=ConeBlocks.empty)
    meta: Mapping[str, Any] = field(default_factory=dict)
    """Free-form annotations such as step_hours and horizon"""

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_eq(self) -> int:
        return len(self.eq_tags)

    @property
    def n_ineq(self) -> int:
        return len(self.ineq_tags)

    @property
    def n_constraints(self) -> int:
        return self.n_eq + self.n_ineq + len(self.cones)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {info.name: i for i, info in enumerate(self.variables)}

    @cached_property
    def binary_mask(self) -> np.ndarray:
        return np.array([info.binary for info in self.variables], dtype=bool)

    @cached_property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary_mask)

    @property
    def is_convex(self) -> bool:
        return bool(np.all(self.q_diag >= 0))

    def var(self, name: str) -> int:
        return self.index[name]

    def indices_of(self, kind: str, owner: Optional[str] = None) -> List[int]:
        return [
            i
            for i, info in enumerate(self.variables)
            if info.kind == kind and (owner is None or info.owner == owner)
        ]

    def lookup(self, kind: str, index: Tuple, owner: str) -> Optional[int]:
        return self._by_key.get((owner, kind, tuple(index)))

    @cached_property
    def _by_key(self) -> Dict[Tuple[str, str, Tuple], int]:
        return {
            (info.owner, info.kind, tuple(info.index)): i
            for i, info in enumerate(self.variables)
        }

    def objective_value(self, x: np.ndarray) -> float:
        return float(
            0.5 * np.dot(self.q_diag, np.square(x)) + np.dot(self.c, x) + self.constant
        )

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "CanonicalConvexProgram":
        return replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def fix(self, values: Mapping[int, float]) -> "CanonicalConvexProgram":
        lb = self.lb.copy()
        ub = self.ub.copy()
        for i, value in values.items():
            lb[i] = ub[i] = value

        return self.with_bounds(lb, ub)

    def row_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for tag in self.eq_tags + self.ineq_tags + self.cones.tags:
            counts[tag.family] = counts.get(tag.family, 0) + 1

        return counts

    def evaluate(
        self, x: np.ndarray, integrality: bool = True
    ) -> Evaluation:
        """Scaled violations: each row is divided by max(1, its largest |coefficient|)"""
        by_kind: Dict[str, float] = {}
        worst = ("", 0.0)

        def _record(kind: str, values: np.ndarray, tags: Sequence) -> None:
            nonlocal worst
            if len(values) == 0:
                by_kind[kind] = 0.0
                return

            i = int(np.argmax(values))
            by_kind[kind] = float(max(values[i], 0.0))
            if values[i] > worst[1]:
                worst = (str(tags[i]) if tags else f"{kind}[{i}]", float(values[i]))

        if self.n_eq:
            scale = _row_scale(self.a_eq)
            _record("eq", np.abs(self.a_eq @ x - self.b_eq) / scale, self.eq_tags)

        if self.n_ineq:
            scale = _row_scale(self.g_ineq)
            _record(
                "ineq",
                np.maximum(self.g_ineq @ x - self.h_ineq, 0.0) / scale,
                self.ineq_tags,
            )

        names = [info.name for info in self.variables]
        bound_violation = np.maximum(self.lb - x, 0.0) + np.maximum(x - self.ub, 0.0)
        _record("bounds", np.nan_to_num(bound_violation), names)

        if len(self.cones):
            _record("cone", self.cones.soc_violations(x), self.cones.tags)

        if integrality and len(self.binary_indices):
            values = x[self.binary_indices]
            _record(
                "integrality",
                np.abs(values - np.round(values)),
                [names[i] for i in self.binary_indices],
            )

        return Evaluation(
            max_violation=max(by_kind.values(), default=0.0),
            by_kind=by_kind,
            worst=worst[0],
        )

    # -------------------------------------------------------------------------

    def write_sparse(self, out: TextIO) -> None:
        """Documented sparse text format (see README)"""
        print("# dsoled canonical program v1", file=out)
        print(
            f"size {self.n_vars} {self.n_eq} {self.n_ineq} {len(self.cones)}", file=out
        )
        for i, info in enumerate(self.variables):
            kind = "B" if info.binary else "C"
            print(
                f"var {i} {info.name} {info.kind} {kind} "
                f"{_num(self.lb[i])} {_num(self.ub[i])}",
                file=out,
            )

        print(f"const {_num(self.constant)}", file=out)
        for i in np.flatnonzero(self.q_diag):
            print(f"q {i} {_num(self.q_diag[i])}", file=out)

        for i in np.flatnonzero(self.c):
            print(f"c {i} {_num(self.c[i])}", file=out)

        _write_block(out, "eq", self.eq_tags, self.b_eq, self.a_eq)
        _write_block(out, "le", self.ineq_tags, self.h_ineq, self.g_ineq)
        for k, tag in enumerate(self.cones.tags):
            print(
                f"cone {k} {tag} {self.cones.l_idx[k]} {self.cones.v_idx[k]} "
                f"{self.cones.p_idx[k]} {self.cones.q_idx[k]}",
                file=out,
            )

    def save_sparse(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as out:
            self.write_sparse(out)


def _num(value: float) -> str:
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"

    return repr(float(value))


def _write_block(
    out: TextIO, name: str, tags: Sequence[RowTag], rhs: np.ndarray, matrix: csr_matrix
) -> None:
    for r, tag in enumerate(tags):
        print(f"{name} {r} {tag} {_num(rhs[r])}", file=out)

    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        print(f"{name}_a {coo.row[k]} {coo.col[k]} {_num(coo.data[k])}", file=out)


def _row_scale(matrix: csr_matrix) -> np.ndarray:
    scale = np.ones(matrix.shape[0])
    if matrix.nnz:
        row_max = abs(matrix).max(axis=1).toarray().ravel()
        scale = np.maximum(scale, row_max)

    return scale


# -----------------------------------------------------------------------------


class ProgramBuilder:
    """Incremental construction of a CanonicalConvexProgram"""

    def __init__(self) -> None:
        self.variables: List[VariableInfo] = []
        self.lb: List[float] = []
        self.ub: List[float] = []
        self.q: Dict[int, float] = {}
        self.c: Dict[int, float] = {}
        self.constant = 0.0

        self._eq: Tuple[List[int], List[int], List[float]] = ([], [], [])
        self._eq_rhs: List[float] = []
        self.eq_tags: List[RowTag] = []

        self._le: Tuple[List[int], List[int], List[float]] = ([], [], [])
        self._le_rhs: List[float] = []
        self.ineq_tags: List[RowTag] = []

        self._cones: Tuple[List[int], List[int], List[int], List[int]] = (
            [],
            [],
            [],
            [],
        )
        self.cone_tags: List[RowTag] = []
        self._names: Dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def add_variable(
        self,
        kind: str,
        index: Sequence,
        owner: str,
        lb: float = 0.0,
        ub: float = INF,
        binary: bool = False,
    ) -> int:
        index = tuple(index)
        name = f"{owner}.{kind}[{','.join(str(i) for i in index)}]"
        assert name not in self._names, f"Duplicate variable {name}"

        self._names[name] = len(self.variables)
        self.variables.append(VariableInfo(name, kind, index, owner, binary))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return len(self.variables) - 1

    def add_eq(self, coeffs: Coeffs, rhs: float, tag: RowTag) -> int:
        return self._add_row(self._eq, self._eq_rhs, self.eq_tags, coeffs, rhs, tag)

    def add_le(self, coeffs: Coeffs, rhs: float, tag: RowTag) -> int:
        return self._add_row(self._le, self._le_rhs, self.ineq_tags, coeffs, rhs, tag)

    def _add_row(self, triplets, rhs_list, tags, coeffs, rhs, tag) -> int:
        row = len(tags)
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for col, value in items:
            if value != 0:
                triplets[0].append(row)
                triplets[1].append(int(col))
                triplets[2].append(float(value))

        rhs_list.append(float(rhs))
        tags.append(tag)
        return row

    def add_rows(
        self,
        matrix: coo_matrix,
        columns: np.ndarray,
        rhs: np.ndarray,
        tags: Sequence[RowTag],
        equality: bool,
    ) -> None:
        """Append a sparse block whose local column k maps to variable columns[k]"""
        matrix = coo_matrix(matrix)
        triplets, rhs_list, tag_list = (
            (self._eq, self._eq_rhs, self.eq_tags)
            if equality
            else (self._le, self._le_rhs, self.ineq_tags)
        )
        offset = len(tag_list)
        mask = matrix.data != 0
        triplets[0].extend((matrix.row[mask] + offset).tolist())
        triplets[1].extend(np.asarray(columns)[matrix.col[mask]].tolist())
        triplets[2].extend(matrix.data[mask].astype(float).tolist())
        rhs_list.extend(float(v) for v in rhs)
        tag_list.extend(tags)

    def add_cone(self, l_var: int, v_var: int, p_var: int, q_var: int, tag: RowTag) -> None:
        for store, value in zip(self._cones, (l_var, v_var, p_var, q_var)):
            store.append(value)

        self.cone_tags.append(tag)

    def add_linear(self, var: int, value: float) -> None:
        self.c[var] = self.c.get(var, 0.0) + value

    def add_quadratic(self, var: int, value: float) -> None:
        """Adds value to the diagonal entry, i.e. value/2 * x^2"""
        self.q[var] = self.q.get(var, 0.0) + value

    def add_program(
        self,
        prog: CanonicalConvexProgram,
        with_objective: bool = True,
    ) -> np.ndarray:
        """Copy every variable, row and cone of prog; returns old -> new index map"""
        columns = np.arange(self.n_vars, self.n_vars + prog.n_vars)
        for i, info in enumerate(prog.variables):
            new = self.add_variable(
                info.kind,
                info.index,
                info.owner,
                lb=prog.lb[i],
                ub=prog.ub[i],
                binary=info.binary,
            )
            assert new == columns[i]

        self.add_rows(prog.a_eq, columns, prog.b_eq, prog.eq_tags, equality=True)
        self.add_rows(prog.g_ineq, columns, prog.h_ineq, prog.ineq_tags, equality=False)
        cones = prog.cones
        for k, tag in enumerate(cones.tags):
            self.add_cone(
                columns[cones.l_idx[k]],
                columns[cones.v_idx[k]],
                columns[cones.p_idx[k]],
                columns[cones.q_idx[k]],
                tag,
            )

        if with_objective:
            for i in np.flatnonzero(prog.c):
                self.add_linear(columns[i], prog.c[i])

            for i in np.flatnonzero(prog.q_diag):
                self.add_quadratic(columns[i], prog.q_diag[i])

            self.constant += prog.constant

        return columns

    def set_bounds(self, var: int, lb: Optional[float] = None, ub: Optional[float] = None) -> None:
        if lb is not None:
            self.lb[var] = float(lb)

        if ub is not None:
            self.ub[var] = float(ub)

    def build(self, meta: Optional[Mapping[str, Any]] = None) -> CanonicalConvexProgram:
        n = self.n_vars
        q_diag = np.zeros(n)
        for i, value in self.q.items():
            q_diag[i] = value

        c = np.zeros(n)
        for i, value in self.c.items():
            c[i] = value

        a_eq = csr_matrix(
            (self._eq[2], (self._eq[0], self._eq[1])), shape=(len(self.eq_tags), n)
        )
        g_ineq = csr_matrix(
            (self._le[2], (self._le[0], self._le[1])), shape=(len(self.ineq_tags), n)
        )
        cones = ConeBlocks(
            *(np.asarray(store, dtype=int) for store in self._cones),
            tags=tuple(self.cone_tags),
        )

        _LOGGER.debug(
            "Built program: %s variable(s), %s equality row(s), %s inequality row(s), %s cone(s)",
            n,
            len(self.eq_tags),
            len(self.ineq_tags),
            len(self.cone_tags),
        )

        return CanonicalConvexProgram(
            variables=tuple(self.variables),
            q_diag=q_diag,
            c=c,
            constant=self.constant,
            a_eq=a_eq,
            b_eq=np.asarray(self._eq_rhs, dtype=float),
            eq_tags=tuple(self.eq_tags),
            g_ineq=g_ineq,
            h_ineq=np.asarray(self._le_rhs, dtype=float),
            ineq_tags=tuple(self.ineq_tags),
            lb=np.asarray(self.lb, dtype=float),
            ub=np.asarray(self.ub, dtype=float),
            cones=cones,
            meta=dict(meta or {}),
        )


# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundsResult:
    lb: np.ndarray
    ub: np.ndarray
    infeasible: bool
    rounds: int


def _stacked_le(prog: CanonicalConvexProgram) -> Tuple[coo_matrix, np.ndarray]:
    matrix = vstack([prog.g_ineq, prog.a_eq, -prog.a_eq]).tocoo()
    rhs = np.concatenate([prog.h_ineq, prog.b_eq, -prog.b_eq])
    return matrix, rhs


def propagate_bounds(
    prog: CanonicalConvexProgram,
    lb: Optional[np.ndarray] = None,
    ub: Optional[np.ndarray] = None,
    max_rounds: int = 50,
    tol: float = 1e-9,
) -> BoundsResult:
    """Interval bound propagation over every linear row; binaries are rounded"""
    lb = (prog.lb if lb is None else lb).astype(float).copy()
    ub = (prog.ub if ub is None else ub).astype(float).copy()
    matrix, rhs = _stacked_le(prog)
    keep = np.abs(matrix.data) > 1e-12
    rows, cols, vals = matrix.row[keep], matrix.col[keep], matrix.data[keep]
    n_rows = matrix.shape[0]
    binary = prog.binary_mask

    rounds = 0
    for rounds in range(1, max_rounds + 1):
        # Minimal activity contribution of each entry
        contrib = np.where(vals > 0, vals * lb[cols], vals * ub[cols])
        infinite = ~np.isfinite(contrib)
        finite_sum = np.bincount(
            rows, weights=np.where(infinite, 0.0, contrib), minlength=n_rows
        )
        inf_count = np.bincount(rows, weights=infinite.astype(float), minlength=n_rows)

        with np.errstate(invalid="ignore"):
            rest = np.where(
                infinite,
                np.where(inf_count[rows] == 1, finite_sum[rows], -INF),
                np.where(inf_count[rows] == 0, finite_sum[rows] - contrib, -INF),
            )
            implied = (rhs[rows] - rest) / vals

        usable = np.isfinite(implied)
        new_ub = np.full_like(ub, INF)
        new_lb = np.full_like(lb, -INF)
        upper = usable & (vals > 0)
        lower = usable & (vals < 0)
        np.minimum.at(new_ub, cols[upper], implied[upper])
        np.maximum.at(new_lb, cols[lower], implied[lower])

        new_ub[binary] = np.floor(new_ub[binary] + 1e-6)
        new_lb[binary] = np.ceil(new_lb[binary] - 1e-6)

        tighter_ub = new_ub < ub - tol * (1.0 + np.abs(np.where(np.isfinite(ub), ub, 0)))
        tighter_lb = new_lb > lb + tol * (1.0 + np.abs(np.where(np.isfinite(lb), lb, 0)))
        ub = np.where(tighter_ub, new_ub, ub)
        lb = np.where(tighter_lb, new_lb, lb)

        if np.any(lb > ub + 1e-7 * (1.0 + np.abs(lb))):
            _LOGGER.debug("Bound propagation proved infeasibility after %s round(s)", rounds)
            return BoundsResult(lb, ub, True, rounds)

        if not (np.any(tighter_ub) or np.any(tighter_lb)):
            break

    # Crossed within tolerance
    crossed = lb > ub
    lb[crossed] = ub[crossed]

    return BoundsResult(lb, ub, False, rounds)


def row_activity_range(
    matrix: csr_matrix, lb: np.ndarray, ub: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(min, max) of each row of matrix @ x over the box [lb, ub]"""
    pos = matrix.maximum(0).tocsr()
    neg = matrix.minimum(0).tocsr()
    with np.errstate(invalid="ignore"):
        low = _safe_dot(pos, lb) + _safe_dot(neg, ub)
        high = _safe_dot(pos, ub) + _safe_dot(neg, lb)

    return low, high


def _safe_dot(matrix: csr_matrix, values: np.ndarray) -> np.ndarray:
    """matrix @ values where 0 * inf counts as 0"""
    result = np.zeros(matrix.shape[0])
    coo = matrix.tocoo()
    if coo.nnz:
        with np.errstate(invalid="ignore"):
            terms = np.where(coo.data != 0, coo.data * values[coo.col], 0.0)
        np.add.at(result, coo.row, terms)

    return result


def completion_rows(
    prog: CanonicalConvexProgram,
) -> Dict[int, List[Tuple[int, float]]]:
    """(row, coefficient) of the inequality rows of each binary; asserts each row
    holds at most one binary"""
    rows_of: Dict[int, List[Tuple[int, float]]] = {
        int(i): [] for i in prog.binary_indices
    }
    if not rows_of:
        return rows_of

    coo = prog.g_ineq.tocoo()
    binary = prog.binary_mask
    per_row: Dict[int, int] = {}
    for r, col, value in zip(coo.row, coo.col, coo.data):
        if binary[col] and value != 0:
            assert r not in per_row, f"Row {prog.ineq_tags[r]} couples several binaries"
            per_row[int(r)] = int(col)
            rows_of[int(col)].append((int(r), float(value)))

    eq_cols = prog.a_eq.tocoo().col
    assert not np.any(binary[eq_cols]), "Binary variable in an equality row"

    return rows_of


def complete_binaries(
    prog: CanonicalConvexProgram,
    x: np.ndarray,
    rows_of: Dict[int, List[Tuple[int, float]]],
    tol: float,
) -> Optional[np.ndarray]:
    """Replace every binary by a 0/1 value that keeps all its rows satisfied,
    leaving the continuous part untouched; None if some binary has no such value"""
    completed = x.copy()
    if not rows_of:
        return completed

    g = prog.g_ineq
    binaries = np.array(sorted(rows_of), dtype=int)
    completed[binaries] = 0.0
    # Activity of each row without its binary
    base = g @ completed
    scale = _row_scale(g)

    for var in binaries:
        lo, hi = prog.lb[var], prog.ub[var]
        preferred = float(np.clip(np.round(x[var]), lo, hi))
        candidates = [preferred] + [v for v in (0.0, 1.0) if v != preferred and lo <= v <= hi]
        chosen = None
        for value in candidates:
            if all(
                base[r] + coeff * value - prog.h_ineq[r] <= tol * scale[r]
                for r, coeff in rows_of[var]
            ):
                chosen = value
                break

        if chosen is None:
            return None

        completed[var] = chosen

    return completed
