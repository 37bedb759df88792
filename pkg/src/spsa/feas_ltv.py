"""Sufficiency check for time-varying admittances sampled on a uniform grid.

Each grid node carries its own ``P_k`` and ``X_k``; the time derivative of
``P`` is replaced by a finite-difference stencil over neighbouring nodes. The
verdict concerns this discretized surrogate only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lmi
from .exceptions import DimensionMismatch, GridTooCoarse, UnsupportedRegime
from .feas_lti import _static_block, add_sufficient_constraints
from .lmi import LmiProblem, LmiResult
from .model import LossParams, LtvAdmittanceGrid

FD_SCHEMES = ("central", "one_sided")
COARSENESS = 0.1


def fd_weights(N: int, k: int, dt: float, scheme: str = "central") -> dict[int, float]:
    """Finite-difference weights ``{node: weight}`` approximating dP/dt at node ``k``.

    ``central`` uses the symmetric stencil at interior nodes and first-order
    one-sided differences at both ends; ``one_sided`` uses forward differences
    everywhere except the last node.
    """
    if scheme not in FD_SCHEMES:
        raise ValueError(f"unknown finite-difference scheme {scheme!r}")
    if scheme == "central" and 0 < k < N - 1:
        return {k - 1: -0.5 / dt, k + 1: 0.5 / dt}
    if k < N - 1:
        return {k: -1.0 / dt, k + 1: 1.0 / dt}
    return {k - 1: -1.0 / dt, k: 1.0 / dt}


def check_grid(sys: LtvAdmittanceGrid):
    if len(sys) < 3:
        raise ValueError("the LTV check needs at least 3 grid nodes")
    if sys.n == 0:
        return
    fastest = max(np.linalg.norm(A, 2) for A in sys.A)
    if fastest > 0 and sys.dt > COARSENESS / fastest * (1 + 1e-9):
        raise GridTooCoarse(
            f"dt={sys.dt:g} exceeds {COARSENESS} / max||A_k|| = {COARSENESS / fastest:g}")


def assemble_ltv(sys: LtvAdmittanceGrid, loss: LossParams, fd_scheme: str = "central",
                 tol: float = lmi.DEFAULT_TOL) -> LmiProblem:
    """One pair of sufficiency constraints per grid node.

    Variables are named ``P{k}`` (symmetric) and ``X{k}``.
    """
    if sys.n_p != loss.n_p:
        raise DimensionMismatch(f"system has {sys.n_p} ports but R has {loss.n_p} entries")
    check_grid(sys)
    prob = LmiProblem(tol)
    N, n = len(sys), sys.n
    if n == 0:
        Rinv = np.diag(1.0 / loss.R)
        for k in range(N):
            prob.add_nsd(f"static{k}", _static_block(sys.D[k], Rinv))
        return prob
    if math.isinf(loss.tau_r):
        raise UnsupportedRegime("tau_r = inf requires a static admittance")
    # normalize by the node data alone so that margins do not shrink with dt
    ref = LmiProblem(tol)
    Pr, Xr = ref.variable("P", (n, n), symmetric=True), ref.variable("X", (n, n))
    for k in range(N):
        add_sufficient_constraints(ref, sys.A[k], sys.B[k], sys.C[k], sys.D[k], loss,
                                   Pr, Xr, suffix=f"{k}")
    prob.scale = ref.data_scale()
    P = [prob.variable(f"P{k}", (n, n), symmetric=True) for k in range(N)]
    X = [prob.variable(f"X{k}", (n, n)) for k in range(N)]
    for k in range(N):
        prob.add_pd(f"P{k}>0", P[k])
        dP = sum(w * P[j] for j, w in fd_weights(N, k, sys.dt, fd_scheme).items())
        add_sufficient_constraints(prob, sys.A[k], sys.B[k], sys.C[k], sys.D[k], loss,
                                   P[k], X[k], dPdt=dP, suffix=f"{k}")
    return prob


@dataclass
class LtvCertificate:
    """Per-node certificate matrices with their recomputed margins."""

    P: np.ndarray
    X: np.ndarray
    lyapunov: np.ndarray
    transmission: np.ndarray
    t: np.ndarray
    fd_scheme: str
    scale: float

    @property
    def margin(self) -> float:
        return float(min(self.lyapunov.min(initial=math.inf),
                         self.transmission.min(initial=math.inf)))

    def to_dict(self):
        return {"P": self.P.tolist(), "X": self.X.tolist(),
                "node_margins": {"lyapunov": self.lyapunov.tolist(),
                                 "transmission": self.transmission.tolist()},
                "grid": {"t0": float(self.t[0]), "dt": float(self.t[1] - self.t[0]),
                         "nodes": int(self.t.size), "fd_scheme": self.fd_scheme},
                "scale": self.scale}


def node_margins(sys: LtvAdmittanceGrid, loss: LossParams, P, X, fd_scheme="central",
                 scale: float = 1.0):
    """Recompute per-node margins from ``(P_k, X_k)`` alone.

    Each node's matrices are rebuilt directly with numpy; only ``P`` at the
    stencil neighbours and ``X_k`` enter node ``k``.
    """
    N, n, n_p = len(sys), sys.n, sys.n_p
    Rinv = np.diag(1.0 / loss.R)
    lyap, trans = np.empty(N), np.empty(N)
    finite = 0 < loss.tau_r < math.inf
    for k in range(N):
        A, B, C, D = sys.A[k], sys.B[k], sys.C[k], sys.D[k]
        if n == 0:
            lyap[k] = math.inf
            trans[k] = -lmi.max_eig(np.block([[-Rinv, 2 * D.T - Rinv], [2 * D - Rinv, -Rinv]])) / scale
            continue
        Pk, Xk = P[k], X[k]
        dP = sum(w * P[j] for j, w in fd_weights(N, k, sys.dt, fd_scheme).items())
        L1 = dP + A.T @ Pk + Pk @ A + 2 * loss.inv_tau_s * Pk + Xk + Xk.T
        Z = np.zeros((n_p, n))
        rows = [[-2 * (Xk + Xk.T), 2 * Pk @ B, 2 * C.T],
                [2 * B.T @ Pk, -Rinv, 2 * D.T - Rinv],
                [2 * C, 2 * D - Rinv, -Rinv]]
        if finite:
            rows[0].append(-2 * Xk.T)
            rows[1].append(2 * B.T @ Pk)
            rows[2].append(Z)
            rows.append([-2 * Xk, 2 * Pk @ B, Z.T, -Pk / loss.tau_r])
        lyap[k] = -lmi.max_eig(L1) / scale
        trans[k] = -lmi.max_eig(np.block(rows)) / scale
    return lyap, trans


@dataclass
class LtvVerdict:
    """Sufficiency verdict for the discretized time-varying problem."""

    result: LmiResult
    certificate: LtvCertificate | None
    regime: str
    nodes: int
    dt: float
    fd_scheme: str
    discretized: bool = True

    @property
    def status(self) -> str:
        return self.result.status

    @property
    def margin(self) -> float:
        return self.result.margin

    def to_dict(self, with_certificate=True):
        d = {"sufficient": self.status, "regime": self.regime,
             "margins": {"sufficient": self.margin},
             "discretized": self.discretized,
             "grid": {"nodes": self.nodes, "dt": self.dt, "fd_scheme": self.fd_scheme}}
        if with_certificate and self.certificate is not None:
            d["certificate"] = self.certificate.to_dict()
        return d


def check_ltv(sys: LtvAdmittanceGrid, loss: LossParams, fd_scheme: str = "central",
              tol: float = lmi.DEFAULT_TOL) -> LtvVerdict:
    """Solve the discretized sufficiency problem and package per-node margins."""
    prob = assemble_ltv(sys, loss, fd_scheme, tol)
    res = lmi.solve_feasibility(prob, tol)
    cert = None
    N, n = len(sys), sys.n
    if res.certificate is not None:
        vals = res.certificate.values
        P = np.array([vals[f"P{k}"] for k in range(N)]) if n else np.zeros((N, 0, 0))
        X = np.array([vals[f"X{k}"] for k in range(N)]) if n else np.zeros((N, 0, 0))
        ly, tr = node_margins(sys, loss, P, X, fd_scheme, res.certificate.scale)
        cert = LtvCertificate(P, X, ly, tr, sys.t, fd_scheme, res.certificate.scale)
    return LtvVerdict(res, cert, loss.regime, N, sys.dt, fd_scheme)
