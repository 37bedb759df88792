"""Self-powered feasibility of fractional-order lead-lag admittances.

The filter is written as a feedback interconnection of a static 2x2 gain
``Z`` and an LTI system, with ``z11`` fixed by the filter and
``(z12, z21, z22)`` free. Only ``k = z12*z21`` and ``w = z22/k`` enter the
frequency and initial-value conditions, which become

* ``w <= c(omega) = -Re 1/(Y~(j omega) - z11)`` for all ``omega``
* ``k >= tau_r * z11 * mu * (w_h - w_L)``

while the static condition ``Z + Z' - 2 Z' W Z >= 0`` with
``W = diag(R, 1)`` couples all entries of ``Z``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .exceptions import AnalyticityViolation, BranchPoint, SpecUnachievable
from .model import INF, FoLeadLag, freqresp_fo

GRID_POINTS = 4096
FEAS_TOL = 1e-9
CSV_COLUMNS = ("mu", "tau_r_max", "tau_s_inv_max", "kp", "wL", "wh")


def design_from_specs(phi_m: float, gamma_m: float, omega_m: float, mu: float) -> FoLeadLag:
    """Filter with peak phase ``phi_m`` (degrees) and gain ``gamma_m`` at ``omega_m``.

    The phase of the filter peaks at the geometric mean of its corners. With
    ``rho = sqrt(w_h / w_L)`` the peak phase is ``mu*(2 atan(rho) - 90 deg)``
    and the gain there is ``k_p * rho**mu``, which gives the corners and the
    gain in closed form.

    Raises
    ------
    SpecUnachievable
        Unless ``0 < phi_m / mu < 90`` degrees.
    """
    if gamma_m <= 0 or omega_m <= 0:
        raise SpecUnachievable("gamma_m and omega_m must be positive")
    if mu == 0:
        raise SpecUnachievable("mu = 0 gives a static gain with no phase")
    lead = phi_m / mu
    if not 0 < lead < 90:
        raise SpecUnachievable(
            f"phase {phi_m} deg is not attainable with mu={mu} (need 0 < phi_m/mu < 90)")
    rho = math.tan(math.radians(lead + 90.0) / 2.0)
    return FoLeadLag(k_p=gamma_m / rho ** mu, omega_L=omega_m / rho,
                     omega_h=omega_m * rho, mu=mu)


@dataclass(frozen=True)
class FoLftParams:
    """Entries of the static gain ``Z`` in the feedback parametrization."""

    z11: float
    z12: float
    z21: float
    z22: float

    @classmethod
    def from_product(cls, f: FoLeadLag, k: float, w: float, alpha: float = 1.0) -> "FoLftParams":
        """``z12 = alpha*sqrt(k)``, ``z21 = sqrt(k)/alpha`` and ``z22 = w*k``."""
        r = math.sqrt(k)
        return cls(f.z11, alpha * r, r / alpha, w * k)

    @property
    def k(self) -> float:
        return self.z12 * self.z21

    def matrix(self) -> np.ndarray:
        return np.array([[self.z11, self.z12], [self.z21, self.z22]])

    def to_dict(self) -> dict:
        return {"z11": self.z11, "z12": self.z12, "z21": self.z21, "z22": self.z22}


def default_grid(f: FoLeadLag, points: int = GRID_POINTS) -> np.ndarray:
    """``0`` followed by log-spaced frequencies over ``[w_L/100, 100 w_h]``."""
    return np.concatenate([[0.0], np.geomspace(f.omega_L / 100, 100 * f.omega_h, points - 1)])


def analyticity_limit(f: FoLeadLag) -> float:
    """Largest ``1/tau_s`` keeping the shifted filter analytic in the open right half-plane.

    The singular set is the pole ``-w_h`` for positive integer ``mu``, the
    pole ``-w_L`` for negative integer ``mu`` and the whole principal-branch
    cut ``[-w_h, -w_L]`` otherwise.
    """
    if f.mu == 0:
        return math.inf
    if float(f.mu).is_integer() and f.mu > 0:
        return f.omega_h
    return f.omega_L


def check_analyticity(f: FoLeadLag, tau_s: float):
    if f.omega_h * tau_s < 1:
        raise AnalyticityViolation(
            f"w_h*tau_s = {f.omega_h * tau_s:.6g} < 1: the shifted filter has a singularity "
            "in the right half-plane")
    limit = analyticity_limit(f)
    if limit * tau_s < 1:
        raise AnalyticityViolation(
            f"1/tau_s = {1 / tau_s:.6g} exceeds {limit:.6g}: the branch cut of the shifted "
            "filter reaches the right half-plane")


def shifted_response(f: FoLeadLag, tau_s: float, omega) -> np.ndarray:
    inv = 0.0 if math.isinf(tau_s) else 1.0 / tau_s
    return freqresp_fo(f, 1j * np.asarray(omega, dtype=float) - inv)


def frequency_bound(f: FoLeadLag, tau_s: float, omega) -> np.ndarray:
    """``c(omega) = -Re 1/(Y~(j omega) - z11)`` (``+inf`` where the difference vanishes)."""
    e = shifted_response(f, tau_s, omega) - f.z11
    with np.errstate(divide="ignore", invalid="ignore"):
        c = -np.real(1.0 / e)
    return np.where(np.abs(e) > 0, c, np.inf)


def asymptotic_bound(f: FoLeadLag, tau_s: float) -> float:
    """Limit of ``c(omega)`` as ``omega -> inf``.

    From ``Y(s) = z11 (1 - mu*dw/s + (mu*dw*(w_h + w_L) + mu^2 dw^2)/(2 s^2) + ...)``
    with ``dw = w_h - w_L``.
    """
    if f.mu == 0:
        return math.inf
    inv = 0.0 if math.isinf(tau_s) else 1.0 / tau_s
    g = f.z11 * f.mu * (f.omega_h - f.omega_L)
    return (0.5 * (f.omega_h + f.omega_L) - inv) / g + 0.5 / f.z11


def w_limit(f: FoLeadLag, tau_s: float, omega_grid=None):
    """Smallest frequency bound over the grid and the asymptote, with its location."""
    omega = default_grid(f) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    c = frequency_bound(f, tau_s, omega)
    i = int(np.argmin(c))
    c_inf = asymptotic_bound(f, tau_s)
    if c_inf < c[i]:
        return c_inf, math.inf
    return float(c[i]), float(omega[i])


def _min_eig_2x2(a, b, d):
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)


def z_condition(z11, z12, z21, z22, R):
    """Smallest eigenvalue of ``Z + Z' - 2 Z' W Z`` (vectorized over entries)."""
    q11 = 2 * z11 - 2 * (R * z11 ** 2 + z21 ** 2)
    q22 = 2 * z22 - 2 * (R * z12 ** 2 + z22 ** 2)
    q12 = z12 + z21 - 2 * (R * z11 * z12 + z21 * z22)
    return _min_eig_2x2(q11, q12, q22)


def _margins(f, R, k_lo, w_max, k, alpha, w):
    """Normalized margins of the three constraint families (vectorized).

    The ``Z`` margin is taken after the congruence ``diag(1, 1/sqrt(k))``,
    which keeps its sign but stops it from vanishing as ``k -> 0``.
    """
    rk = np.sqrt(k)
    z12, z21, z22 = alpha * rk, rk / alpha, w * k
    m_freq = f.z11 * (w_max - w) if np.isfinite(w_max) else np.full_like(k * w, 1.0)
    m_iv = 1.0 - k_lo / k
    q11 = 2 * f.z11 - 2 * (R * f.z11 ** 2 + z21 ** 2)
    q22 = (2 * z22 - 2 * (R * z12 ** 2 + z22 ** 2)) / k
    q12 = (z12 + z21 - 2 * (R * f.z11 * z12 + z21 * z22)) / rk
    norm = np.maximum(1.0, np.abs(q11) + np.abs(q22) + 2 * np.abs(q12))
    m_z = _min_eig_2x2(q11, q12, q22) / norm
    return m_freq, m_iv, m_z


@dataclass
class FoVerdict:
    """Margins of one fixed ``Z`` against the frequency, initial-value and ``Z`` conditions."""

    feasible: bool
    margins: dict
    params: FoLftParams
    w_max: float
    worst_omega: float
    tau_r: float

    def to_dict(self):
        return {"feasible": self.feasible, "margins": self.margins,
                "params": self.params.to_dict(), "w_max": self.w_max,
                "worst_omega": self.worst_omega, "tau_r": self.tau_r}


def fo_feasibility(f: FoLeadLag, R: float, tau_s: float, tau_r: float,
                   z12: float, z21: float, z22: float, omega_grid=None,
                   tol: float = FEAS_TOL) -> FoVerdict:
    """Evaluate all three constraint families for a given ``Z``.

    Margins are positive when a constraint holds: ``frequency`` is
    ``z11 * (min c - z22/k)``, ``initial_value`` is ``1 - k_min/k`` and
    ``z_condition`` is the smallest eigenvalue of ``Z + Z' - 2 Z' W Z``
    after scaling its second row and column by ``1/sqrt(k)``, normalized by
    the size of the scaled matrix.
    """
    check_analyticity(f, tau_s)
    k = z12 * z21
    p = FoLftParams(f.z11, z12, z21, z22)
    w_max, w_at = w_limit(f, tau_s, omega_grid)
    if k <= 0:
        m = {"frequency": -math.inf, "initial_value": -math.inf,
             "z_condition": float(z_condition(f.z11, z12, z21, z22, R))}
        return FoVerdict(False, m, p, w_max, w_at, tau_r)
    k_lo = tau_r * f.z11 * f.mu * (f.omega_h - f.omega_L)
    mf, mi, mz = _margins(f, R, k_lo, w_max, np.float64(k), z12 / math.sqrt(k), z22 / k)
    m = {"frequency": float(mf), "initial_value": float(mi), "z_condition": float(mz)}
    return FoVerdict(min(m.values()) >= -tol, m, p, w_max, w_at, tau_r)


@dataclass
class InnerSearch:
    margin: float
    params: FoLftParams | None
    margins: dict = field(default_factory=dict)


def best_parameters(f: FoLeadLag, R: float, tau_s: float, tau_r: float,
                    omega_grid=None, w_max: float | None = None) -> InnerSearch:
    """Maximize the smallest constraint margin over ``(k, alpha, w)``.

    A log grid over ``k`` and ``alpha`` and a linear grid over ``w`` seed a
    Nelder-Mead refinement in ``(log k, log alpha, w)``. Deterministic.
    """
    if w_max is None:
        w_max, _ = w_limit(f, tau_s, omega_grid)
    if w_max <= 0:
        return InnerSearch(f.z11 * w_max if np.isfinite(w_max) else -math.inf, None,
                           {"frequency": f.z11 * w_max})
    k_lo = max(tau_r * f.z11 * f.mu * (f.omega_h - f.omega_L), 0.0)
    k_hi = 4.0 * max(f.z11, k_lo, 1.0 / max(R, 1e-12))
    k_min = k_lo if k_lo > 0 else 1e-8 * f.z11
    ks = np.geomspace(k_min, max(k_hi, 2 * k_min), 48)
    alphas = np.geomspace(1e-2, 1e2, 41)
    w_top = w_max if np.isfinite(w_max) else 4.0 / f.z11 + 4.0
    ws = np.linspace(0, w_top, 49)[1:]
    K, Al, Wg = np.meshgrid(ks, alphas, ws, indexing="ij")

    def objective(K, Al, Wg):
        return np.minimum.reduce(_margins(f, R, k_lo, w_max, K, Al, Wg))

    vals = objective(K, Al, Wg)
    i = np.unravel_index(int(np.argmax(vals)), vals.shape)
    x0 = np.array([math.log(K[i]), math.log(Al[i]), Wg[i]])

    def neg(x):
        return -float(objective(np.exp(x[0]), np.exp(x[1]), x[2]))

    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000, "maxfev": 8000})
    x = res.x if -res.fun >= vals[i] else x0
    k, alpha, w = math.exp(x[0]), math.exp(x[1]), x[2]
    mf, mi, mz = _margins(f, R, k_lo, w_max, np.float64(k), np.float64(alpha), np.float64(w))
    margins = {"frequency": float(mf), "initial_value": float(mi), "z_condition": float(mz)}
    return InnerSearch(min(margins.values()), FoLftParams.from_product(f, k, w, alpha), margins)


@dataclass
class FoTauRResult:
    status: str
    tau_r: float
    params: FoLftParams | None = None
    margin: float = math.nan
    iterations: int = 0

    def to_dict(self):
        return {"status": self.status, "tau_r": self.tau_r, "margin": self.margin,
                "iterations": self.iterations,
                "params": None if self.params is None else self.params.to_dict()}


def fo_max_tau_r(f: FoLeadLag, R: float, tau_s: float = INF, tol: float = 1e-3,
                 omega_grid=None, cap: float = 1e6) -> FoTauRResult:
    """Largest ``tau_r`` for which some ``(z12, z21, z22)`` satisfies every condition.

    Geometric bisection to relative width ``tol``; the feasibility test at
    each ``tau_r`` is :func:`best_parameters` with margin ``>= -1e-9``.
    """
    check_analyticity(f, tau_s)
    w_max, _ = w_limit(f, tau_s, omega_grid)

    def search(tr):
        return best_parameters(f, R, tau_s, tr, omega_grid, w_max)

    it = 1
    s0 = search(0.0)
    if s0.margin < -FEAS_TOL:
        return FoTauRResult("infeasible_at_zero", 0.0, s0.params, s0.margin, it)
    if f.mu * (f.omega_h - f.omega_L) <= 0:
        # the initial-value condition holds for every tau_r
        return FoTauRResult("bracket_exhausted", cap, s0.params, s0.margin, it)
    lo, best = 0.0, s0
    hi = 1.0
    while True:
        it += 1
        s = search(hi)
        if s.margin < -FEAS_TOL:
            break
        lo, best = hi, s
        if hi >= cap:
            return FoTauRResult("bracket_exhausted", hi, s.params, s.margin, it)
        hi *= 10.0
    if lo == 0.0:
        lo = hi
        while lo > 1e-12:
            lo /= 10.0
            it += 1
            s = search(lo)
            if s.margin >= -FEAS_TOL:
                best = s
                break
            hi = lo
        else:
            return FoTauRResult("ok", 0.0, s0.params, s0.margin, it)
    while hi / lo > 1.0 + tol:
        mid = math.sqrt(lo * hi)
        it += 1
        s = search(mid)
        if s.margin >= -FEAS_TOL:
            lo, best = mid, s
        else:
            hi = mid
    return FoTauRResult("ok", lo, best.params, best.margin, it)


def max_leakage_rate(f: FoLeadLag, R: float, tol: float = 1e-3, omega_grid=None) -> float:
    """Largest ``1/tau_s`` (up to :func:`analyticity_limit`) feasible at ``tau_r = 0``.

    Returns ``nan`` when even ``1/tau_s = 0`` is infeasible.
    """
    def ok(rate):
        tau_s = INF if rate == 0 else 1.0 / rate
        try:
            return best_parameters(f, R, tau_s, 0.0, omega_grid).margin >= -FEAS_TOL
        except BranchPoint:
            return False

    if not ok(0.0):
        return math.nan
    hi = analyticity_limit(f)
    if ok(hi):
        return hi
    lo = 0.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class BackbonePoint:
    mu: float
    filter: FoLeadLag | None
    tau_r_max: float
    tau_s_inv_max: float
    status: str = "ok"
    message: str = ""

    def row(self):
        f = self.filter
        nan = math.nan
        return [self.mu, self.tau_r_max, self.tau_s_inv_max,
                f.k_p if f else nan, f.omega_L if f else nan, f.omega_h if f else nan]


def backbone(mu_grid, phi_m: float, gamma_m: float, omega_m: float, R: float,
             tau_s: float = INF, tol: float = 1e-3) -> list[BackbonePoint]:
    """Corner points ``(max 1/tau_s, max tau_r)`` of the feasible regions over ``mu``.

    Infeasible orders report ``tau_r_max = 0``; per-order errors are recorded
    and do not stop the curve.
    """
    out = []
    for mu in np.asarray(mu_grid, dtype=float).ravel():
        try:
            f = design_from_specs(phi_m, gamma_m, omega_m, float(mu))
            res = fo_max_tau_r(f, R, tau_s, tol)
            rate = max_leakage_rate(f, R, tol)
            tr = res.tau_r if res.status != "infeasible_at_zero" else 0.0
            out.append(BackbonePoint(float(mu), f, tr, 0.0 if math.isnan(rate) else rate,
                                     res.status))
        except (SpecUnachievable, AnalyticityViolation) as exc:
            out.append(BackbonePoint(float(mu), None, math.nan, math.nan, "error", str(exc)))
    return out


def write_backbone_csv(points, fh):
    w = csv.writer(fh)
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow([f"{x:.12g}" for x in p.row()])
