"""Nonlinear energy-storage oracle.

The controller state and the stored energy are integrated together with a
classical RK4 step and a step-doubling error monitor. Storage power follows
the maximal-recharge root of the storage power balance. The run stops at the
first instant where the storage cannot deliver the demanded power (choke).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import Choke, DimensionMismatch, StepTooLarge
from .model import LossParams, LtiAdmittance, LtvAdmittanceGrid, eval_tf_lti

ERROR_BOUND = 1e-4
EVENT_RESOLUTION = 1e-9
MAX_HALVINGS = 12
STATIC_POWER_TOL = 1e-12
TRAJECTORY_COLUMNS = ("t", "E_s", "P_e", "P_s", "P_d", "u_s", "v_s")


def storage_power(E_s: float, P_e: float, loss: LossParams) -> float:
    """Power drawn from storage to deliver ``P_e`` to the actuators.

    Parameters
    ----------
    E_s : float
        Stored energy, J. Must be non-negative.
    P_e : float
        Demanded actuation power, W (negative when harvesting).
    loss : LossParams

    Returns
    -------
    float
        The maximal-recharge root ``P_s``. For ``tau_r = 0`` this is ``P_e``;
        for ``tau_r = inf`` no power crosses the transmission path.

    Raises
    ------
    Choke
        If ``P_e > E_s / (2 tau_r)``.
    """
    if E_s < 0:
        raise ValueError(f"stored energy must be non-negative, got {E_s}")
    tr = loss.tau_r
    if tr == 0:
        return float(P_e)
    if math.isinf(tr):
        if P_e > STATIC_POWER_TOL:
            raise Choke(math.nan, E_s, P_e)
        return 0.0
    a = E_s / tr
    disc = a * a - 2.0 * a * P_e
    if disc < 0:
        # rounding exactly at the bound
        if disc < -1e-12 * a * a or a == 0:
            raise Choke(math.nan, E_s, P_e)
        disc = 0.0
    # rationalized a - sqrt(disc), free of cancellation for small P_e
    return 2.0 * a * P_e / (a + math.sqrt(disc))


def choke_slack(E_s: float, P_e: float, loss: LossParams) -> float:
    """Signed distance to the choke bound (negative means choked)."""
    if loss.tau_r == 0:
        return E_s
    if math.isinf(loss.tau_r):
        return STATIC_POWER_TOL - P_e
    return E_s / (2.0 * loss.tau_r) - P_e


@dataclass(frozen=True)
class Signal:
    """Sampled port-voltage signal, linearly interpolated between samples.

    ``values`` has shape ``(N, n_p)``; times outside the record hold the end
    values.
    """

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != t.size:
            raise DimensionMismatch(f"{t.size} times but {v.shape[0]} samples")
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("signal times must be strictly increasing with at least 2 samples")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def n_p(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __call__(self, time: float) -> np.ndarray:
        t = self.t
        k = int(np.clip(np.searchsorted(t, time, side="right") - 1, 0, t.size - 2))
        w = (time - t[k]) / (t[k + 1] - t[k])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    @classmethod
    def from_function(cls, fn, t) -> "Signal":
        t = np.asarray(t, dtype=float)
        return cls(t, np.array([np.atleast_1d(fn(ti)) for ti in t], dtype=float))


def sine_signal(t, n_p=1, amplitude=1.0, omega=1.0, phases=None) -> Signal:
    """Sinusoid of the same frequency on every port."""
    t = np.asarray(t, dtype=float)
    ph = np.zeros(n_p) if phases is None else np.asarray(phases, dtype=float)
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (n_p,))
    return Signal(t, amp * np.sin(omega * t[:, None] + ph))


def bandlimited_noise(t, n_p=1, band=(0.1, 10.0), rms=1.0, n_tones=32, seed=None) -> Signal:
    """Random multisine with log-spaced tones inside ``band`` (rad/s).

    Each port gets independent random amplitudes and phases; the result is
    scaled to the requested RMS value per port.
    """
    rng = np.random.default_rng(seed)
    t = np.asarray(t, dtype=float)
    w = np.exp(rng.uniform(np.log(band[0]), np.log(band[1]), size=n_tones))
    amp = rng.uniform(0.2, 1.0, size=(n_tones, n_p))
    ph = rng.uniform(0, 2 * np.pi, size=(n_tones, n_p))
    v = np.einsum("kp,tkp->tp", amp, np.sin(w[None, :, None] * t[:, None, None] + ph[None]))
    v *= rms / np.sqrt(0.5 * np.sum(amp ** 2, axis=0))
    return Signal(t, v)


@dataclass
class EnergyTrajectory:
    """Sampled record of one storage simulation."""

    t: np.ndarray
    E_s: np.ndarray
    P_e: np.ndarray
    P_s: np.ndarray
    P_d: np.ndarray
    u_s: np.ndarray
    v_s: np.ndarray
    loss: LossParams
    choke: tuple | None = None
    substeps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def choked(self) -> bool:
        return self.choke is not None

    def power_residual(self) -> np.ndarray:
        """``u'v + u'Ru + v_s u_s + R_r u_s^2`` per sample (zero in exact arithmetic)."""
        if math.isinf(self.loss.tau_r):
            return self.P_e - self.P_s
        return self.P_e + self.v_s * self.u_s + self.loss.R_r * self.u_s ** 2

    def relative_residual(self) -> float:
        scale = max(np.max(np.abs(self.P_e), initial=0.0), np.max(np.abs(self.P_s), initial=0.0))
        res = np.max(np.abs(self.power_residual()), initial=0.0)
        return res / scale if scale > 0 else res

    def to_rows(self):
        for row in zip(*(getattr(self, c) for c in TRAJECTORY_COLUMNS)):
            yield [float(x) for x in row]

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for row in self.to_rows():
            w.writerow([f"{x:.12g}" for x in row])
        if self.choke is not None:
            w.writerow(["# choke", *(f"{x:.12g}" for x in self.choke)])


def read_trajectory_csv(fh, loss: LossParams) -> EnergyTrajectory:
    rows, choke = [], None
    for rec in csv.reader(fh):
        if not rec or rec[0] == "t":
            continue
        if rec[0] == "# choke":
            choke = tuple(float(x) for x in rec[1:])
            continue
        rows.append([float(x) for x in rec])
    a = np.array(rows, dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))
    return EnergyTrajectory(*a.T, loss=loss, choke=choke)


class _StageChoke(Exception):
    pass


class _Dynamics:
    def __init__(self, sys, v: Signal, loss: LossParams):
        self.loss = loss
        self.R = loss.R
        self.v = v
        if isinstance(sys, LtvAdmittanceGrid):
            self.mats = sys.matrices_at
        else:
            M = (sys.A, sys.B, sys.C, sys.D)
            self.mats = lambda _t: M
        self.n = sys.n

    def output(self, t, x):
        A, B, C, D = self.mats(t)
        v = self.v(t)
        u = -(C @ x + D @ v)
        return A, B, v, u, float(u @ v + u @ (self.R * u))

    def rates(self, t, y):
        x, E = y[:-1], y[-1]
        A, B, v, _, P_e = self.output(t, x)
        if E < 0 or choke_slack(E, P_e, self.loss) < 0:
            raise _StageChoke
        try:
            P_s = storage_power(E, P_e, self.loss)
        except Choke:
            raise _StageChoke from None
        dE = -2.0 * self.loss.inv_tau_s * E - P_s
        return np.concatenate([A @ x + B @ v, [dE]])

    def rk4(self, t, y, h):
        k1 = self.rates(t, y)
        k2 = self.rates(t + h / 2, y + h / 2 * k1)
        k3 = self.rates(t + h / 2, y + h / 2 * k2)
        k4 = self.rates(t + h, y + h * k3)
        y1 = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        _, _, _, _, P_e = self.output(t + h, y1[:-1])
        if y1[-1] < 0 or choke_slack(y1[-1], P_e, self.loss) < 0:
            raise _StageChoke
        return y1


def _max_rate(sys) -> float:
    if isinstance(sys, LtvAdmittanceGrid):
        if sys.n == 0:
            return 0.0
        return max(float(np.max(np.abs(np.linalg.eigvals(a)))) for a in sys.A)
    return float(np.max(np.abs(sys.poles()))) if sys.n else 0.0


def simulate(sys, v: Signal, E_s0: float, loss: LossParams, dt: float,
             x0=None, raise_on_choke: bool = False) -> EnergyTrajectory:
    """Integrate the controller and storage until the end of ``v`` or choke.

    Parameters
    ----------
    sys : LtiAdmittance or LtvAdmittanceGrid
    v : Signal
        Port voltages; zero history before ``v.t[0]``.
    E_s0 : float
        Initial stored energy, J (> 0).
    loss : LossParams
    dt : float
        Output step, s. Must not exceed a tenth of the fastest time constant.
    x0 : array, optional
        Initial controller state (default zero).
    raise_on_choke : bool
        Raise :class:`Choke` instead of returning the truncated record.

    Returns
    -------
    EnergyTrajectory
        Sampled every ``dt`` up to the end of ``v``; on choke the record ends
        at the last feasible instant and ``choke`` holds ``(t, E_s, P_e)``.

    Raises
    ------
    StepTooLarge
        If the step-doubling error stays above the bound after the allowed
        number of step halvings, or ``dt`` violates the time-constant bound.
    """
    if E_s0 <= 0:
        raise ValueError("E_s0 must be positive")
    if v.n_p != sys.n_p or loss.n_p != sys.n_p:
        raise DimensionMismatch(f"ports: system {sys.n_p}, signal {v.n_p}, R {loss.n_p}")
    rate = _max_rate(sys)
    if rate > 0 and dt > 0.1 / rate * (1 + 1e-12):
        raise StepTooLarge(f"dt={dt:g} exceeds a tenth of the fastest time constant ({1 / rate:g} s)")
    dyn = _Dynamics(sys, v, loss)
    n = sys.n
    y = np.zeros(n + 1)
    if x0 is not None:
        y[:n] = np.asarray(x0, dtype=float)
    y[-1] = E_s0
    t0, t_end = float(v.t[0]), float(v.t[-1])
    n_steps = int(math.ceil((t_end - t0) / dt - 1e-9))
    ts, states, scale = [t0], [y.copy()], np.abs(y)
    choke = None
    substeps = 0

    def advance(t, y, h, depth):
        nonlocal scale, substeps
        full = dyn.rk4(t, y, h)
        half = dyn.rk4(t + h / 2, dyn.rk4(t, y, h / 2), h / 2)
        scale = np.maximum(scale, np.maximum(np.abs(full), np.abs(half)))
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.where(scale > 0, np.abs(full - half) / scale, 0.0)
        if np.max(err, initial=0.0) <= ERROR_BOUND:
            return half
        if depth >= MAX_HALVINGS:
            raise StepTooLarge(f"step-doubling error {np.max(err):.3g} at t={t:.6g}")
        substeps += 1
        mid = advance(t, y, h / 2, depth + 1)
        return advance(t + h / 2, mid, h / 2, depth + 1)

    for k in range(n_steps):
        t = t0 + k * dt
        h = min(dt, t_end - t)
        try:
            y = advance(t, y, h, 0)
        except _StageChoke:
            lo, hi, y_lo = 0.0, h, y
            while hi - lo > EVENT_RESOLUTION:
                mid = 0.5 * (lo + hi)
                try:
                    y_lo = dyn.rk4(t, y, mid)
                    lo = mid
                except _StageChoke:
                    hi = mid
            _, _, _, _, P_e = dyn.output(t + hi, y_lo[:-1])
            choke = (t + hi, float(y_lo[-1]), P_e)
            if lo > 0:
                ts.append(t + lo)
                states.append(y_lo)
            break
        ts.append(t + h)
        states.append(y.copy())

    traj = _record(dyn, np.array(ts), np.array(states), loss, choke, substeps)
    if choke is not None and raise_on_choke:
        raise Choke(*choke)
    return traj


def _record(dyn, t, Y, loss, choke, substeps) -> EnergyTrajectory:
    E = Y[:, -1]
    P_e = np.empty_like(E)
    P_s = np.empty_like(E)
    uRu = np.empty_like(E)
    for i, (ti, yi) in enumerate(zip(t, Y)):
        _, _, _, u, P_e[i] = dyn.output(ti, yi[:-1])
        uRu[i] = u @ (loss.R * u)
        try:
            P_s[i] = storage_power(E[i], P_e[i], loss)
        except Choke:
            P_s[i] = E[i] / loss.tau_r
    v_s = np.sqrt(2.0 * E / loss.C_s)
    with np.errstate(invalid="ignore", divide="ignore"):
        u_s = np.where(v_s > 0, -P_s / v_s, 0.0)
    R_r = 0.0 if math.isinf(loss.tau_r) else loss.R_r
    P_d = uRu + R_r * u_s ** 2 + 2.0 * loss.inv_tau_s * E
    return EnergyTrajectory(t, E, P_e, P_s, P_d, u_s, v_s, loss, choke, substeps)


@dataclass
class ChokeSearch:
    """Outcome of a search for an input that drains the storage."""

    found: bool
    signal: Signal | None
    trajectory: EnergyTrajectory | None
    attempts: list = field(default_factory=list)


def worst_case_input(sys: LtiAdmittance, loss: LossParams, omega: float, horizon: float,
                     dt: float, amplitude: float = 1.0) -> Signal:
    """Leakage-shaped sinusoid along the direction of largest power demand.

    The input ``exp(-t/tau_s) R^{1/2} Re(a exp(j omega t))`` excites the shifted
    admittance at ``j omega``; ``a`` is the top right singular vector of
    ``I - 2 R^{1/2} Y(j omega - 1/tau_s) R^{1/2}``, which maximises the
    demanded power relative to the input.
    """
    rh = np.sqrt(loss.R)
    Y = eval_tf_lti(sys, complex(-loss.inv_tau_s, omega))
    M = np.eye(sys.n_p) - 2.0 * rh[:, None] * Y * rh[None, :]
    _, _, Vh = np.linalg.svd(M)
    a = Vh[0].conj()
    t = np.arange(0.0, horizon + dt / 2, dt)
    z = np.exp((1j * omega - loss.inv_tau_s) * t)[:, None] * a[None, :]
    return Signal(t, amplitude * rh[None, :] * z.real)


def find_choking_input(sys: LtiAdmittance, loss: LossParams, omega: float | None = None,
                       horizon: float | None = None, E_s0: float = 1e-6,
                       n_random: int = 4, seed: int = 0) -> ChokeSearch:
    """Try structured and random inputs until the storage chokes.

    The structured candidate targets the frequency of worst necessary-condition
    violation (``omega``; located by the H-inf check when omitted). Random
    band-limited inputs follow if it fails.
    """
    from .feas_lti import check_necessary_hinf

    rate = max(_max_rate(sys), 1e-3)
    if omega is None:
        nec = check_necessary_hinf(sys, loss)
        omega = nec.peak_omega if np.isfinite(nec.peak_omega) else 10.0 * rate
    slow = 1.0
    if sys.n:
        slow = 1.0 / max(np.min(np.abs(np.real(sys.poles()) + loss.inv_tau_s)), 1e-3)
    period = 2 * np.pi / omega if omega > 0 else slow
    if horizon is None:
        horizon = min(max(20 * period, 10 * slow, 10.0), 200.0)
    dt = 0.1 / max(rate, omega, 1.0) if omega > 0 else 0.1 / max(rate, 1.0)
    dt = min(dt, period / 40)
    attempts = []
    candidates = [("worst_direction", worst_case_input(sys, loss, omega, horizon, dt))]
    t = np.arange(0.0, horizon + dt / 2, dt)
    for i in range(n_random):
        band = (max(omega / 10, 1e-2), max(omega * 10, 1.0))
        candidates.append((f"random_{i}", bandlimited_noise(t, sys.n_p, band, seed=seed + i)))
    for name, sig in candidates:
        try:
            traj = simulate(sys, sig, E_s0, loss, dt)
        except StepTooLarge as exc:
            attempts.append((name, f"step error: {exc}"))
            continue
        attempts.append((name, "choke" if traj.choked else "no choke"))
        if traj.choked:
            return ChokeSearch(True, sig, traj, attempts)
    return ChokeSearch(False, None, None, attempts)
