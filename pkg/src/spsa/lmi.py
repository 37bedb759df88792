"""Block-affine linear matrix inequalities and a margin-based feasibility solver.

A problem is a list of symmetric affine maps ``F(y) = F0 + sum_i y_i F_i`` in
a decision vector ``y``. Each map is required to be negative semidefinite
(``"nsd"``) or positive definite (``"pd"``, enforced as ``F >= eps*I``).

The solver maximizes a uniform eigenvalue margin ``t`` over the problem
normalized by its largest data magnitude. Whatever the solver reports, the
verdict is taken from eigenvalues recomputed at the returned point, so a
feasible certificate never depends on solver state.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from numbers import Real

import numpy as np
from scipy import sparse

from .exceptions import DimensionMismatch

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"

DEFAULT_TOL = 1e-7
Y_BOUND = 1e6
# tighter bound for the second attempt after an inaccurate solve
RETRY_Y_BOUND = 1e4
STRICT_SLACK = 1e-3


class Affine:
    """Matrix-valued affine function of the decision vector.

    Stored sparsely: ``idx`` lists the decision entries the expression depends
    on and ``coef[j]`` (shape (r, c)) multiplies ``y[idx[j]]``. The value at
    ``y`` is ``const + sum_j y[idx[j]] * coef[j]``.
    """

    __array_ufunc__ = None

    def __init__(self, const, coef=None, idx=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        if coef is None:
            coef = np.zeros((0,) + self.const.shape)
            idx = np.zeros(0, dtype=int)
        self.coef = np.asarray(coef, dtype=float)
        self.idx = np.asarray(idx, dtype=int)

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self):
        return Affine(self.const.T, self.coef.transpose(0, 2, 1), self.idx)

    def expand(self, idx):
        """Coefficients laid out over a superset ``idx`` of ``self.idx``."""
        out = np.zeros((len(idx),) + self.shape)
        if self.idx.size:
            out[np.searchsorted(idx, self.idx)] = self.coef
        return out

    @staticmethod
    def lift(x, shape=None):
        if isinstance(x, Affine):
            return x
        if isinstance(x, Real) and x == 0 and shape is not None:
            return Affine(np.zeros(shape))
        return Affine(x)

    def __add__(self, other):
        other = Affine.lift(other, self.shape)
        if other.shape != self.shape:
            raise DimensionMismatch(f"cannot add {self.shape} and {other.shape}")
        idx = np.union1d(self.idx, other.idx)
        return Affine(self.const + other.const, self.expand(idx) + other.expand(idx), idx)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, -self.coef, self.idx)

    def __sub__(self, other):
        return self + (-Affine.lift(other, self.shape))

    def __rsub__(self, other):
        return Affine.lift(other, self.shape) - self

    def __mul__(self, a):
        if not isinstance(a, Real):
            return NotImplemented
        return Affine(a * self.const, a * self.coef, self.idx)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / a)

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, self.coef @ M, self.idx)

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, np.matmul(M[None], self.coef), self.idx)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self.idx.size == 0:
            return self.const.copy()
        return self.const + np.tensordot(y[self.idx], self.coef, axes=1)


def block(rows):
    """Assemble a block matrix from a nested list of blocks.

    ``None`` entries below the diagonal are filled with the transpose of
    their mirror, so symmetric matrices can be written with ``*`` blanks as
    usual. A literal ``0`` becomes a zero block of the inferred size.
    """
    nr = len(rows)
    if any(len(r) != nr for r in rows):
        raise DimensionMismatch("block layout must be square")
    heights = [None] * nr
    widths = [None] * nr
    for i, row in enumerate(rows):
        for j, b in enumerate(row):
            if isinstance(b, (Affine, np.ndarray)) or (b is not None and not isinstance(b, Real)):
                shp = Affine.lift(b).shape
                heights[i] = heights[i] or shp[0]
                widths[j] = widths[j] or shp[1]
    for i in range(nr):
        heights[i] = heights[i] if heights[i] is not None else widths[i]
        widths[i] = widths[i] if widths[i] is not None else heights[i]
        if heights[i] is None:
            raise DimensionMismatch(f"cannot infer size of block row {i}")
    full = []
    for i in range(nr):
        row = []
        for j in range(nr):
            b = rows[i][j]
            if b is None:
                b = Affine.lift(rows[j][i], (heights[j], widths[i])).T
            b = Affine.lift(b, (heights[i], widths[j]))
            if b.shape != (heights[i], widths[j]):
                raise DimensionMismatch(
                    f"block ({i},{j}) has shape {b.shape}, expected {(heights[i], widths[j])}")
            row.append(b)
        full.append(row)
    idx = np.zeros(0, dtype=int)
    for row in full:
        for b in row:
            idx = np.union1d(idx, b.idx)
    const = np.block([[b.const for b in row] for row in full])
    coef = np.concatenate(
        [np.concatenate([b.expand(idx) for b in row], axis=2) for row in full], axis=1)
    return Affine(const, coef, idx)


@dataclass(frozen=True)
class SymBlockMatrix:
    """Dense symmetric matrix with named row/column spans."""

    data: np.ndarray
    blocks: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.data.shape[0]

    def __getitem__(self, key):
        r, c = key
        return self.data[self.blocks[r], self.blocks[c]]

    def asymmetry(self):
        scale = max(np.max(np.abs(self.data)), np.finfo(float).tiny) if self.data.size else 1.0
        return np.max(np.abs(self.data - self.data.T)) / scale if self.data.size else 0.0


def min_eig(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    a = M.data if isinstance(M, SymBlockMatrix) else np.asarray(M, dtype=float)
    if a.size == 0:
        return math.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def max_eig(M) -> float:
    a = M.data if isinstance(M, SymBlockMatrix) else np.asarray(M, dtype=float)
    if a.size == 0:
        return -math.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1])


@dataclass
class Variable:
    name: str
    shape: tuple
    symmetric: bool
    offset: int

    @property
    def size(self):
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def unpack(self, y):
        r, c = self.shape
        seg = np.asarray(y[self.offset:self.offset + self.size], dtype=float)
        if self.symmetric:
            M = np.zeros((r, r))
            iu = np.triu_indices(r)
            M[iu] = seg
            M = M + np.triu(M, 1).T
            return M
        return seg.reshape(r, c)


@dataclass
class Constraint:
    name: str
    F0: np.ndarray
    F: np.ndarray
    idx: np.ndarray
    sense: str
    blocks: dict
    eps: float = 0.0

    @property
    def dim(self):
        return self.F0.shape[0]

    def assemble(self, y) -> SymBlockMatrix:
        M = self.F0.copy()
        if self.idx.size:
            M += np.tensordot(np.asarray(y, float)[self.idx], self.F, axes=1)
        return SymBlockMatrix(M, dict(self.blocks))


class LmiProblem:
    """Collection of decision variables and affine matrix inequalities.

    Examples
    --------
    >>> prob = LmiProblem()
    >>> P = prob.variable("P", (1, 1), symmetric=True)
    >>> prob.add_pd("P>0", P)
    >>> prob.add_nsd("lyap", -1.0 * P + P * -1.0)
    """

    def __init__(self, tol: float = DEFAULT_TOL):
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.tol = tol
        # fixed normalization, used instead of the data scale when set
        self.scale: float | None = None

    @property
    def n_free(self):
        return sum(v.size for v in self.variables)

    def variable(self, name, shape, symmetric=False) -> Affine:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"duplicate variable {name!r}")
        r, c = shape
        if symmetric and r != c:
            raise DimensionMismatch("symmetric variables must be square")
        var = Variable(name, (r, c), symmetric, self.n_free)
        self.variables.append(var)
        coef = np.zeros((var.size, r, c))
        idx = 0
        if symmetric:
            for i in range(r):
                for j in range(i, r):
                    coef[idx, i, j] = coef[idx, j, i] = 1.0
                    idx += 1
        else:
            for i in range(r):
                for j in range(c):
                    coef[idx, i, j] = 1.0
                    idx += 1
        return Affine(np.zeros((r, c)), coef, np.arange(var.offset, var.offset + var.size))

    def _add(self, name, expr, sense, blocks, eps):
        expr = Affine.lift(expr)
        m, c = expr.shape
        if m != c:
            raise DimensionMismatch(f"constraint {name!r} is not square: {expr.shape}")
        F = expr.coef
        sym_scale = max(np.max(np.abs(expr.const)), np.max(np.abs(F)) if F.size else 0.0, 1e-300)
        asym = max(np.max(np.abs(expr.const - expr.const.T)),
                   np.max(np.abs(F - F.transpose(0, 2, 1))) if F.size else 0.0)
        if asym > 1e-12 * sym_scale:
            raise DimensionMismatch(f"constraint {name!r} is not symmetric (asymmetry {asym:.3g})")
        F0 = 0.5 * (expr.const + expr.const.T)
        F = 0.5 * (F + F.transpose(0, 2, 1))
        self.constraints.append(Constraint(name, F0, F, expr.idx.copy(), sense,
                                           dict(blocks or {}), eps))

    def add_nsd(self, name, expr, blocks=None):
        """Require ``expr <= 0``."""
        self._add(name, expr, "nsd", blocks, 0.0)

    def add_pd(self, name, expr, eps=None, blocks=None):
        """Require ``expr > 0``, enforced as ``expr >= eps*I`` on the normalized problem.

        ``eps`` defaults to ``tol * dim``.
        """
        expr = Affine.lift(expr)
        eps = self.tol * expr.shape[0] if eps is None else eps
        self._add(name, expr, "pd", blocks, eps)

    def data_scale(self) -> float:
        """Largest absolute entry over all constraint data, unless ``scale`` is set."""
        if self.scale is not None:
            return self.scale
        s = 0.0
        for c in self.constraints:
            s = max(s, np.max(np.abs(c.F0)) if c.F0.size else 0.0)
            if c.F.size:
                s = max(s, np.max(np.abs(c.F)))
        return s if s > 0 else 1.0

    def unpack(self, y) -> dict:
        return {v.name: v.unpack(y) for v in self.variables}

    def pack(self, values: dict) -> np.ndarray:
        y = np.zeros(self.n_free)
        for v in self.variables:
            M = np.asarray(values[v.name], dtype=float)
            if v.symmetric:
                y[v.offset:v.offset + v.size] = M[np.triu_indices(v.shape[0])]
            else:
                y[v.offset:v.offset + v.size] = M.ravel()
        return y

    def to_json(self, y=None) -> str:
        """Debug dump of the assembled matrices (optionally evaluated at ``y``)."""
        doc = {"variables": [{"name": v.name, "shape": list(v.shape), "symmetric": v.symmetric}
                             for v in self.variables],
               "constraints": []}
        for c in self.constraints:
            item = {"name": c.name, "sense": c.sense, "eps": c.eps,
                    "F0": c.F0.tolist(), "F": c.F.tolist(), "index": c.idx.tolist()}
            if y is not None:
                item["value"] = c.assemble(y).data.tolist()
            doc["constraints"].append(item)
        return json.dumps(doc)


@dataclass
class Certificate:
    """Decision values together with recomputed eigenvalue margins.

    ``worst_eigs`` holds, per constraint and in the original units, the
    largest eigenvalue of "nsd" constraints and the smallest of "pd" ones.
    ``margin`` is the normalized overall margin of the "nsd" constraints:
    positive means they all hold with room to spare. ``strict`` records
    whether every "pd" constraint meets its ``eps`` bound.
    """

    values: dict
    y: np.ndarray
    worst_eigs: dict
    margins: dict
    margin: float
    scale: float
    strict: bool = True

    def to_dict(self):
        return {"values": {k: np.asarray(v).tolist() for k, v in self.values.items()},
                "worst_eigs": self.worst_eigs, "margins": self.margins,
                "margin": self.margin, "scale": self.scale, "strict": self.strict}


@dataclass
class LmiResult:
    status: str
    margin: float
    certificate: Certificate
    solver_status: str = ""

    @property
    def feasible(self):
        return self.status == FEASIBLE

    def __bool__(self):
        return self.feasible


def evaluate(problem: LmiProblem, y, scale=None) -> Certificate:
    """Assemble every constraint at ``y`` and compute eigenvalue margins.

    Uses nothing but the problem data, so it doubles as the independent
    certificate checker. The overall margin is taken over the "nsd"
    constraints; "pd" constraints are hard and only checked for strictness.
    """
    y = np.zeros(problem.n_free) if y is None else np.asarray(y, dtype=float)
    scale = problem.data_scale() if scale is None else scale
    worst, margins = {}, {}
    nsd, strict = [], True
    for c in problem.constraints:
        M = c.assemble(y)
        if c.sense == "nsd":
            e = max_eig(M)
            m = -e / scale
            nsd.append(m)
        else:
            e = min_eig(M)
            m = e / scale - c.eps
            # solver round-off allowance on the hard bound
            strict &= m >= -STRICT_SLACK * c.eps
        worst[c.name] = e
        margins[c.name] = m
    if nsd:
        margin = min(nsd)
    else:
        margin = min(margins.values())
    return Certificate(problem.unpack(y), y, worst, margins, margin, scale, bool(strict))


def verify_certificate(problem: LmiProblem, cert: Certificate, atol=1e-9) -> bool:
    """Re-assemble the constraints at the certified point and compare eigenvalues."""
    y = problem.pack(cert.values)
    fresh = evaluate(problem, y, cert.scale)
    for name, e in cert.worst_eigs.items():
        if abs(fresh.worst_eigs[name] - e) > atol * max(1.0, abs(e)):
            return False
    return abs(fresh.margin - cert.margin) <= atol * max(1.0, abs(cert.margin))


def classify(margin: float, tol: float, strict: bool = True) -> str:
    if margin >= tol and strict:
        return FEASIBLE
    if margin <= -tol:
        return INFEASIBLE
    return INDETERMINATE


def _scatter_columns(cols, idx, k):
    """Sparse (rows, k) matrix holding ``cols`` at column positions ``idx``."""
    return sparse.csc_matrix(sparse.coo_matrix(
        (cols.ravel(order="F"), (np.tile(np.arange(cols.shape[0]), idx.size),
                                 np.repeat(idx, cols.shape[0]))),
        shape=(cols.shape[0], k)))


def solve_feasibility(problem: LmiProblem, tol: float | None = None,
                      y_bound: float = Y_BOUND, solver: str = "CLARABEL") -> LmiResult:
    """Search for a decision vector satisfying every constraint.

    Maximizes a uniform margin ``t <= 1`` of the "nsd" constraints on the
    normalized problem, with "pd" constraints enforced as ``F >= eps*I`` and
    ``|y|_inf <= y_bound``. The verdict is ``feasible`` when the margin
    recomputed at the returned point is at least ``tol``, ``infeasible``
    when the optimal margin is at most ``-tol`` and ``indeterminate``
    otherwise, including any solver failure without a verified point.

    An indeterminate first attempt is repeated once with the tighter bound
    ``RETRY_Y_BOUND``, which often restores solver accuracy; infeasibility is
    then relative to that bound.
    """
    res = _solve_once(problem, tol, y_bound, solver)
    if res.status == INDETERMINATE and problem.n_free and y_bound > RETRY_Y_BOUND:
        retry = _solve_once(problem, tol, RETRY_Y_BOUND, solver)
        if retry.status != INDETERMINATE:
            retry.solver_status += f" (retry, |y| <= {RETRY_Y_BOUND:g})"
            return retry
    return res


def _solve_once(problem, tol, y_bound, solver) -> LmiResult:
    import cvxpy as cp

    tol = problem.tol if tol is None else tol
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not problem.constraints:
        raise ValueError("problem has no constraints")
    scale = problem.data_scale()
    k = problem.n_free
    if k == 0:
        cert = evaluate(problem, np.zeros(0), scale)
        return LmiResult(classify(cert.margin, tol, cert.strict), cert.margin, cert, "no variables")

    y = cp.Variable(k)
    t = cp.Variable()
    cons = [t <= 1.0, cp.abs(y) <= y_bound]
    for c in problem.constraints:
        m = c.dim
        Fmat = _scatter_columns(c.F.reshape(c.idx.size, m * m).T / scale, c.idx, k)
        E = cp.reshape(Fmat @ y, (m, m), order="C") + c.F0 / scale
        E = 0.5 * (E + E.T)
        if c.sense == "nsd":
            cons.append(-E - t * np.eye(m) >> 0)
        else:
            cons.append(E - c.eps * np.eye(m) >> 0)
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        with warnings.catch_warnings():
            # inaccurate solutions are classified below
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=solver)
        status = prob.status
    except cp.error.SolverError as exc:
        status = f"solver_error: {exc}"
    if y.value is None:
        cert = evaluate(problem, np.zeros(k), scale)
        return LmiResult(INDETERMINATE, cert.margin, cert, status)
    cert = evaluate(problem, y.value, scale)
    if cert.margin >= tol and cert.strict:
        return LmiResult(FEASIBLE, cert.margin, cert, status)
    t_opt = float(t.value) if t.value is not None else -math.inf
    if status == cp.OPTIMAL and t_opt <= -tol:
        return LmiResult(INFEASIBLE, max(cert.margin, t_opt), cert, status)
    return LmiResult(INDETERMINATE, cert.margin, cert, status)
