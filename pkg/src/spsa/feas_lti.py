"""Self-powered feasibility of time-invariant state-space admittances.

Sufficiency is decided by two matrix inequalities in a Lyapunov-like matrix
``P > 0`` and a free multiplier ``X``. Necessity is checked either as an H-inf
bound on the leakage-shifted, resistance-scaled admittance or as the
equivalent bounded-real LMI. For ``tau_r = 0`` and for static admittances
with ``tau_r = inf`` the two coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .exceptions import DimensionMismatch, EquivalenceViolation, UnsupportedRegime
from .lmi import Affine, LmiProblem, LmiResult, block
from .model import LossParams, LtiAdmittance, freqresp_lti

HINF_GRID_POINTS = 2048
HAMILTONIAN_RE_TOL = 1e-8


def _check_ports(sys, loss):
    if sys.n_p != loss.n_p:
        raise DimensionMismatch(f"system has {sys.n_p} ports but R has {loss.n_p} entries")


def _static_block(D, Rinv):
    return block([[-Rinv, 2 * D.T - Rinv],
                  [None, -Rinv]])


def _port_spans(n, n_p, with_transmission):
    spans = {"x": slice(0, n), "v": slice(n, n + n_p), "r": slice(n + n_p, n + 2 * n_p)}
    if with_transmission:
        spans["P"] = slice(n + 2 * n_p, 2 * n + 2 * n_p)
    return spans


def add_sufficient_constraints(prob: LmiProblem, A, B, C, D, loss: LossParams,
                               P: Affine, X: Affine, dPdt=None, suffix=""):
    """Append the two sufficiency inequalities for one set of matrices.

    ``dPdt`` is an affine expression for the time derivative of ``P`` (zero
    for time-invariant certificates).
    """
    n = A.shape[0]
    Rinv = np.diag(1.0 / loss.R)
    lyap = A.T @ P + P @ A + (2 * loss.inv_tau_s) * P + X + X.T
    if dPdt is not None:
        lyap = lyap + dPdt
    prob.add_nsd("lyapunov" + suffix, lyap, blocks={"x": slice(0, n)})
    rows = [[-2 * (X + X.T), 2 * (P @ B), 2 * C.T],
            [None, -Rinv, 2 * D.T - Rinv],
            [None, None, -Rinv]]
    finite = 0 < loss.tau_r < math.inf
    if finite:
        rows[0].append(-2 * X.T)
        rows[1].append(2 * (B.T @ P))
        rows[2].append(0)
        rows.append([None, None, None, -(1.0 / loss.tau_r) * P])
    prob.add_nsd("transmission" + suffix, block(rows),
                 blocks=_port_spans(n, D.shape[0], finite))


def assemble_sufficient(sys: LtiAdmittance, loss: LossParams, tol: float = lmi.DEFAULT_TOL) -> LmiProblem:
    """Build the sufficiency LMI problem for a time-invariant admittance.

    With ``tau_r = 0`` the transmission row/column is dropped. A static
    admittance (``n = 0``) reduces to the 2x2 condition on ``D`` alone,
    whatever the time constants.

    Raises
    ------
    UnsupportedRegime
        For ``tau_r = inf`` with dynamics: only static admittances can be
        self-powered when the storage cannot deliver power.
    """
    _check_ports(sys, loss)
    prob = LmiProblem(tol)
    Rinv = np.diag(1.0 / loss.R)
    if sys.n == 0:
        prob.add_nsd("static", _static_block(sys.D, Rinv), blocks={"v": slice(0, sys.n_p),
                                                                   "r": slice(sys.n_p, 2 * sys.n_p)})
        return prob
    if math.isinf(loss.tau_r):
        raise UnsupportedRegime(
            "tau_r = inf requires a static admittance; supply the minimal (n = 0) realization")
    n = sys.n
    P = prob.variable("P", (n, n), symmetric=True)
    X = prob.variable("X", (n, n))
    prob.add_pd("P>0", P)
    add_sufficient_constraints(prob, sys.A, sys.B, sys.C, sys.D, loss, P, X)
    return prob


def check_sufficient(sys: LtiAdmittance, loss: LossParams, tol: float = lmi.DEFAULT_TOL) -> LmiResult:
    return lmi.solve_feasibility(assemble_sufficient(sys, loss, tol), tol)


def assemble_necessary(sys: LtiAdmittance, loss: LossParams, tol: float = lmi.DEFAULT_TOL) -> LmiProblem:
    """Bounded-real form of the necessary condition."""
    _check_ports(sys, loss)
    prob = LmiProblem(tol)
    Rinv = np.diag(1.0 / loss.R)
    if sys.n == 0:
        prob.add_nsd("bounded_real", _static_block(sys.D, Rinv))
        return prob
    n = sys.n
    P = prob.variable("P", (n, n), symmetric=True)
    prob.add_pd("P>0", P)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    M = block([[2 * (A.T @ P) + 2 * (P @ A) + (4 * loss.inv_tau_s) * P, 2 * (P @ B), 2 * C.T],
               [None, -Rinv, 2 * D.T - Rinv],
               [None, None, -Rinv]])
    prob.add_nsd("bounded_real", M, blocks=_port_spans(n, sys.n_p, False))
    return prob


def check_necessary_lmi(sys: LtiAdmittance, loss: LossParams, tol: float = lmi.DEFAULT_TOL) -> LmiResult:
    return lmi.solve_feasibility(assemble_necessary(sys, loss, tol), tol)


def shifted_scaled_realization(sys: LtiAdmittance, loss: LossParams):
    """Realization of ``I - 2 R^{1/2} Y(s - 1/tau_s) R^{1/2}``."""
    _check_ports(sys, loss)
    rh = np.sqrt(loss.R)
    At = sys.A + loss.inv_tau_s * np.eye(sys.n)
    Bt = sys.B * rh[None, :]
    Ct = -2.0 * rh[:, None] * sys.C
    Dt = np.eye(sys.n_p) - 2.0 * rh[:, None] * sys.D * rh[None, :]
    return At, Bt, Ct, Dt


def _sigma_max(G):
    return np.linalg.svd(G, compute_uv=False)[..., 0]


def _has_imaginary_eig(A, B, C, D, gamma):
    p = D.shape[1]
    Rg = gamma ** 2 * np.eye(p) - D.T @ D
    Ri = np.linalg.inv(Rg)
    Ah = A + B @ Ri @ D.T @ C
    H = np.block([[Ah, B @ Ri @ B.T],
                  [-C.T @ (np.eye(D.shape[0]) + D @ Ri @ D.T) @ C, -Ah.T]])
    lam = np.linalg.eigvals(H)
    on_axis = np.abs(lam.real) <= HAMILTONIAN_RE_TOL * np.maximum(1.0, np.abs(lam))
    return bool(np.any(on_axis)), lam[on_axis]


def hinf_norm(A, B, C, D, rtol: float = 1e-10, grid_points: int = HINF_GRID_POINTS):
    """H-inf norm of a stable realization by Hamiltonian-eigenvalue bisection.

    Returns ``(norm, peak_frequency)``; the peak frequency is ``inf`` when the
    supremum is attained at infinite frequency.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    sd = float(_sigma_max(D)) if D.size else 0.0
    n = A.shape[0] if A.size else 0
    if n == 0:
        return sd, math.inf
    lam = np.linalg.eigvals(A)
    if np.max(lam.real) >= 0:
        raise ValueError("hinf_norm needs a Hurwitz state matrix")
    mags = np.abs(lam)
    wlo = max(np.min(mags), 1e-6) / 100.0
    whi = max(np.max(mags), 1e-6) * 100.0
    w = np.concatenate([[0.0], np.logspace(np.log10(wlo), np.log10(whi), grid_points - 1)])
    square = D.shape[0] == D.shape[1] == B.shape[1] == C.shape[0]
    if square:
        G = freqresp_lti(LtiAdmittance(A, B, C, D), 1j * w)
    else:
        G = np.array([C @ np.linalg.solve(1j * wi * np.eye(n) - A, B) + D for wi in w])
    sv = _sigma_max(G)
    i = int(np.argmax(sv))
    best, w_peak = float(sv[i]), float(w[i])
    if best <= sd:
        best, w_peak = sd, math.inf
    lo = best
    hi = 10.0 * max(best, np.finfo(float).tiny)
    if lo == 0.0:
        return 0.0, math.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        hit, eigs = _has_imaginary_eig(A, B, C, D, mid)
        if not hit:
            hi = mid
            continue
        lo = mid
        # crossing frequencies give a direct lower bound
        cand = np.unique(np.abs(eigs.imag))
        vals = _sigma_max(np.array(
            [C @ np.linalg.solve(1j * wc * np.eye(n) - A, B) + D for wc in cand]))
        j = int(np.argmax(vals))
        if vals[j] >= best:
            best, w_peak = float(vals[j]), float(cand[j])
        lo = max(lo, min(best, hi))
    return lo, w_peak


@dataclass
class NecessaryResult:
    passed: bool
    norm: float
    peak_omega: float = math.nan
    witness: complex | None = None

    def to_dict(self):
        d = {"status": "pass" if self.passed else "fail", "hinf_norm": self.norm,
             "peak_omega": self.peak_omega}
        if self.witness is not None:
            d["unstable_shifted_eigenvalue"] = [self.witness.real, self.witness.imag]
        return d


def check_necessary_hinf(sys: LtiAdmittance, loss: LossParams, tol: float = 1e-7) -> NecessaryResult:
    """Check ``||2 R^{1/2} Y(s - 1/tau_s) R^{1/2} - I||_inf <= 1``.

    Fails with a witness eigenvalue when ``A + I/tau_s`` is not Hurwitz, since
    the shifted admittance then is not in H-inf.
    """
    At, Bt, Ct, Dt = shifted_scaled_realization(sys, loss)
    if sys.n:
        lam = np.linalg.eigvals(At)
        k = int(np.argmax(lam.real))
        if lam[k].real >= 0:
            return NecessaryResult(False, math.inf, math.nan, complex(lam[k]))
    norm, w = hinf_norm(At, Bt, Ct, Dt)
    return NecessaryResult(norm <= 1.0 + tol, norm, w)


@dataclass
class FeasVerdict:
    """Sufficient and necessary verdicts for one admittance and loss triple."""

    sufficient: LmiResult | None
    necessary: NecessaryResult
    regime: str
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def sufficient_status(self):
        return self.sufficient.status if self.sufficient is not None else lmi.INFEASIBLE

    @property
    def consistent(self):
        """Sufficient feasibility must imply the necessary condition."""
        return not (self.sufficient_status == lmi.FEASIBLE and not self.necessary.passed)

    def to_dict(self, with_certificate=True):
        d = {"sufficient": self.sufficient_status,
             "necessary": "pass" if self.necessary.passed else "fail",
             "regime": self.regime,
             "margins": {"sufficient": None if self.sufficient is None else self.sufficient.margin,
                         "hinf_norm": self.necessary.norm},
             "necessary_detail": self.necessary.to_dict(),
             "consistent": self.consistent}
        if self.note:
            d["note"] = self.note
        if with_certificate and self.sufficient is not None:
            d["certificate"] = self.sufficient.certificate.to_dict()
        d.update(self.extra)
        return d


def check_lti(sys: LtiAdmittance, loss: LossParams, tol: float = lmi.DEFAULT_TOL) -> FeasVerdict:
    """Run both the sufficient LMI and the necessary H-inf check."""
    necessary = check_necessary_hinf(sys, loss, tol)
    note = ""
    try:
        sufficient = check_sufficient(sys, loss, tol)
    except UnsupportedRegime as exc:
        sufficient, note = None, f"infeasible by structure: {exc}"
    return FeasVerdict(sufficient, necessary, loss.regime, note)


def recheck_certificate(sys: LtiAdmittance, loss: LossParams, values: dict,
                        tol: float = lmi.DEFAULT_TOL) -> lmi.Certificate:
    """Evaluate an existing (P, X) certificate against other loss parameters."""
    prob = assemble_sufficient(sys, loss, tol)
    return lmi.evaluate(prob, prob.pack(values) if prob.n_free else None)


@dataclass
class EquivalenceReport:
    sufficient: LmiResult
    necessary: LmiResult
    agree: bool | None

    def to_dict(self):
        return {"sufficient": self.sufficient.status, "necessary": self.necessary.status,
                "sufficient_margin": self.sufficient.margin,
                "necessary_margin": self.necessary.margin, "agree": self.agree}


def check_theorem4_equivalence(sys: LtiAdmittance, loss: LossParams,
                               tol: float = lmi.DEFAULT_TOL) -> EquivalenceReport:
    """Compare the reduced sufficient LMI with the necessary LMI at ``tau_r = 0``.

    ``agree`` is ``None`` when either verdict falls in the indeterminate band.

    Raises
    ------
    EquivalenceViolation
        If one verdict is feasible and the other infeasible.
    """
    if loss.tau_r != 0:
        raise ValueError("the equivalence check needs tau_r = 0")
    suf = check_sufficient(sys, loss, tol)
    nec = check_necessary_lmi(sys, loss, tol)
    decided = {suf.status, nec.status} <= {lmi.FEASIBLE, lmi.INFEASIBLE}
    agree = (suf.status == nec.status) if decided else None
    if agree is False:
        raise EquivalenceViolation(
            f"sufficient={suf.status} (margin {suf.margin:.3g}) but "
            f"necessary={nec.status} (margin {nec.margin:.3g})")
    return EquivalenceReport(suf, nec, agree)
