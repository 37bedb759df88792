"""Domain types shared by the analysis modules and transfer-function evaluation.

Infinite time constants are represented by ``math.inf``; it is treated as an
exact limit everywhere, never as a large number.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import BranchPoint, DimensionMismatch, SingularResolvent

INF = math.inf


def _frozen(a, ndim=2):
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_matrix(a, rows, cols, name):
    arr = np.array(a, dtype=float)
    if arr.size == 0:
        arr = np.zeros((rows, cols))
    if arr.ndim != 2 or arr.shape != (rows, cols):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LossParams:
    """Parasitic loss parameters of the actuation and storage hardware.

    Parameters
    ----------
    R : array_like
        Actuator resistances in ohms. Either the diagonal as a vector or a
        diagonal matrix; stored as the diagonal vector.
    tau_s : float
        Leakage time constant R_s C_s in seconds, ``math.inf`` for no leakage.
    tau_r : float
        Transmission time constant R_r C_s in seconds, ``0`` for lossless
        transmission and ``math.inf`` for a storage that cannot deliver power.
    C_s : float
        Storage capacitance in farads. Only used to report v_s and u_s.
    """

    R: np.ndarray
    tau_s: float = INF
    tau_r: float = 0.0
    C_s: float = 1.0

    def __post_init__(self):
        r = np.array(self.R, dtype=float)
        if r.ndim == 2:
            if r.shape[0] != r.shape[1] or np.any(r - np.diag(np.diag(r))):
                raise ValueError("R must be diagonal")
            r = np.diag(r).copy()
        r = np.atleast_1d(r)
        if r.ndim != 1 or r.size == 0 or not np.all(r > 0) or not np.all(np.isfinite(r)):
            raise ValueError("R must have strictly positive finite diagonal entries")
        r.setflags(write=False)
        object.__setattr__(self, "R", r)
        tau_s, tau_r = float(self.tau_s), float(self.tau_r)
        if not tau_s > 0 or math.isnan(tau_s):
            raise ValueError("tau_s must be > 0 (or inf)")
        if not tau_r >= 0 or math.isnan(tau_r):
            raise ValueError("tau_r must be >= 0 (or inf)")
        if not (self.C_s > 0 and math.isfinite(self.C_s)):
            raise ValueError("C_s must be a positive finite number")
        object.__setattr__(self, "tau_s", tau_s)
        object.__setattr__(self, "tau_r", tau_r)
        object.__setattr__(self, "C_s", float(self.C_s))

    @property
    def n_p(self) -> int:
        return self.R.size

    @property
    def R_matrix(self) -> np.ndarray:
        return np.diag(self.R)

    @property
    def inv_tau_s(self) -> float:
        return 0.0 if math.isinf(self.tau_s) else 1.0 / self.tau_s

    @property
    def regime(self) -> str:
        if self.tau_r == 0:
            return "tau_r_zero"
        if math.isinf(self.tau_r):
            return "tau_r_infinite"
        return "generic"

    @property
    def R_r(self) -> float:
        return self.tau_r / self.C_s

    @property
    def R_s(self) -> float:
        return self.tau_s / self.C_s

    def replace(self, **changes) -> "LossParams":
        kw = dict(R=self.R, tau_s=self.tau_s, tau_r=self.tau_r, C_s=self.C_s)
        kw.update(changes)
        return LossParams(**kw)

    def to_dict(self) -> dict:
        def enc(x):
            return "inf" if math.isinf(x) else x
        return {"R": self.R.tolist(), "tau_s": enc(self.tau_s),
                "tau_r": enc(self.tau_r), "C_s": self.C_s}


@dataclass(frozen=True)
class LtiAdmittance:
    """State-space realization of an admittance ``v -> -u``.

    ``dx/dt = A x + B v`` and ``-u = C x + D v``. A state dimension of zero
    describes the static admittance ``Y(s) = D``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _frozen(np.atleast_2d(np.array(self.D, dtype=float)))
        n_p = D.shape[0]
        if D.shape != (n_p, n_p):
            raise DimensionMismatch(f"D must be square, got {D.shape}")
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[0]
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "A", _as_matrix(A, n, n, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, n, n_p, "B"))
        object.__setattr__(self, "C", _as_matrix(self.C, n_p, n, "C"))

    @classmethod
    def static(cls, D) -> "LtiAdmittance":
        D = np.atleast_2d(np.array(D, dtype=float))
        p = D.shape[0]
        return cls(np.zeros((0, 0)), np.zeros((0, p)), np.zeros((p, 0)), D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.D.shape[0]

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n else np.zeros(0, dtype=complex)

    def __call__(self, s):
        return eval_tf_lti(self, s)

    def to_dict(self) -> dict:
        return {"kind": "lti", "A": self.A.tolist(), "B": self.B.tolist(),
                "C": self.C.tolist(), "D": self.D.tolist()}


@dataclass(frozen=True)
class LtvAdmittanceGrid:
    """Time-sampled state-space matrices of a time-varying admittance.

    ``A, B, C, D`` are stacked along the first axis, one slice per sample in
    ``t``. Samples must be uniformly spaced.
    """

    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    rtol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        t = _frozen(self.t, ndim=1)
        N = t.size
        if N < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("t must be strictly increasing with at least 2 samples")
        dt = np.diff(t)
        if np.max(np.abs(dt - dt.mean())) > self.rtol * dt.mean():
            raise ValueError("LTV samples must be uniformly spaced")
        D = np.array(self.D, dtype=float)
        if D.ndim != 3 or D.shape[0] != N or D.shape[1] != D.shape[2]:
            raise DimensionMismatch(f"D must have shape ({N}, n_p, n_p), got {D.shape}")
        n_p = D.shape[1]
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else A.shape[1]
        shapes = {"A": (n, n), "B": (n, n_p), "C": (n_p, n)}
        out = {"t": t, "D": D}
        for name, shp in shapes.items():
            arr = np.array(getattr(self, name), dtype=float)
            if arr.size == 0:
                arr = np.zeros((N,) + shp)
            if arr.shape != (N,) + shp:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {(N,) + shp}")
            out[name] = arr
        for name, arr in out.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, sys: LtiAdmittance, t) -> "LtvAdmittanceGrid":
        """Replicate an LTI realization at every sample time."""
        t = np.asarray(t, dtype=float)
        N = t.size

        def rep(M):
            return np.repeat(M[None, :, :], N, axis=0)
        return cls(t, rep(sys.A), rep(sys.B), rep(sys.C), rep(sys.D))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def n_p(self) -> int:
        return self.D.shape[1]

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    def __len__(self):
        return self.t.size

    def at(self, k: int) -> LtiAdmittance:
        return LtiAdmittance(self.A[k], self.B[k], self.C[k], self.D[k])

    def matrices_at(self, time: float):
        """Linearly interpolated (A, B, C, D) at an arbitrary time."""
        tc = min(max(time, self.t[0]), self.t[-1])
        pos = (tc - self.t[0]) / self.dt
        k = min(int(pos), self.t.size - 2)
        w = pos - k
        return tuple((1 - w) * M[k] + w * M[k + 1] for M in (self.A, self.B, self.C, self.D))

    def to_dict(self) -> dict:
        return {"kind": "ltv", "t": self.t.tolist(), "A": self.A.tolist(),
                "B": self.B.tolist(), "C": self.C.tolist(), "D": self.D.tolist()}


@dataclass(frozen=True)
class FoLeadLag:
    """Fractional-order lead-lag filter ``k_p ((1 + s/w_L) / (1 + s/w_h))**mu``."""

    k_p: float
    omega_L: float
    omega_h: float
    mu: float

    def __post_init__(self):
        if not self.k_p > 0:
            raise ValueError("k_p must be positive")
        if not 0 < self.omega_L < self.omega_h:
            raise ValueError("need 0 < omega_L < omega_h")
        for name in ("k_p", "omega_L", "omega_h", "mu"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def z11(self) -> float:
        """High-frequency gain, the static part of the LFT."""
        return self.k_p * (self.omega_h / self.omega_L) ** self.mu

    def __call__(self, s):
        return eval_tf_fo(self, s)

    def to_dict(self) -> dict:
        return {"kind": "fo", "kp": self.k_p, "wL": self.omega_L,
                "wh": self.omega_h, "mu": self.mu}


def eval_tf_lti(sys: LtiAdmittance, s: complex) -> np.ndarray:
    """Evaluate ``C (sI - A)^{-1} B + D`` at a complex frequency.

    Raises
    ------
    SingularResolvent
        If ``s`` lies within 1e-12 of an eigenvalue of ``A``.
    """
    s = complex(s)
    if sys.n == 0:
        return sys.D.astype(complex)
    eig = np.linalg.eigvals(sys.A)
    if np.min(np.abs(eig - s)) <= 1e-12 * max(1.0, abs(s)):
        raise SingularResolvent(f"s={s} is an eigenvalue of A")
    M = s * np.eye(sys.n) - sys.A
    return sys.C @ np.linalg.solve(M, sys.B.astype(complex)) + sys.D


def freqresp_lti(sys: LtiAdmittance, s) -> np.ndarray:
    """Vectorized :func:`eval_tf_lti`; returns an array of shape (len(s), n_p, n_p).

    Uses the eigendecomposition of ``A`` when it is well conditioned.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    out = np.broadcast_to(sys.D.astype(complex), (s.size, sys.n_p, sys.n_p)).copy()
    if sys.n == 0:
        return out
    lam, V = np.linalg.eig(sys.A)
    if np.linalg.cond(V) < 1e8:
        CV = sys.C @ V
        VB = np.linalg.solve(V, sys.B.astype(complex))
        out += np.einsum("ik,fk,kj->fij", CV, 1.0 / (s[:, None] - lam[None, :]), VB)
        return out
    for i, si in enumerate(s):
        out[i] = eval_tf_lti(sys, si)
    return out


def eval_tf_fo(f: FoLeadLag, s: complex) -> complex:
    """Evaluate the fractional-order filter with the principal-branch power.

    Raises
    ------
    BranchPoint
        If ``|s + omega_h| < 1e-12 * omega_h``.
    """
    s = complex(s)
    if abs(s + f.omega_h) < 1e-12 * f.omega_h:
        raise BranchPoint(f"s={s} is the branch point -omega_h")
    ratio = (1 + s / f.omega_L) / (1 + s / f.omega_h)
    if f.mu == 0:
        return complex(f.k_p)
    if ratio == 0:
        return complex(0.0) if f.mu > 0 else complex(math.inf)
    return f.k_p * cmath.exp(f.mu * cmath.log(ratio))


def freqresp_fo(f: FoLeadLag, s) -> np.ndarray:
    """Vectorized :func:`eval_tf_fo` (principal branch)."""
    s = np.asarray(s, dtype=complex)
    if np.any(np.abs(s + f.omega_h) < 1e-12 * f.omega_h):
        raise BranchPoint("frequency grid hits the branch point -omega_h")
    ratio = (1 + s / f.omega_L) / (1 + s / f.omega_h)
    if f.mu == 0:
        return np.full(s.shape, complex(f.k_p))
    out = np.full(s.shape, 0j if f.mu > 0 else complex(math.inf))
    nz = ratio != 0
    out[nz] = f.k_p * np.exp(f.mu * np.log(ratio[nz]))
    return out


def shift_frequency(Y_eval: Callable[[complex], object], tau_s: float, omega: float):
    """Evaluate ``Y(j*omega - 1/tau_s)``, the leakage-shifted response.

    Evaluation errors propagate; they signal that the shifted admittance is not
    analytic on the closed right half-plane.
    """
    inv = 0.0 if math.isinf(tau_s) else 1.0 / tau_s
    return Y_eval(complex(-inv, omega))
