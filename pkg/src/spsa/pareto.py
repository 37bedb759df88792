"""Largest transmission time constant for which an admittance stays self-powered.

Sufficiency is monotone in ``tau_r`` (the ``tau_r`` term enters the LMI as
``-P/tau_r``), so the boundary is found by geometric bisection. Sweeps over
resistance scalings and leakage rates trace feasible regions.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .feas_lti import check_sufficient
from .model import INF, LossParams, LtiAdmittance

OK = "ok"
INFEASIBLE_AT_ZERO = "infeasible_at_zero"
BRACKET_EXHAUSTED = "bracket_exhausted"
ERROR = "error"

DEFAULT_UPPER = 1e3
DEFAULT_CAP = 1e6
DEFAULT_FLOOR = 1e-9
CSV_COLUMNS = ("R_scale", "tau_s_inv", "tau_r_max", "status", "margin")


@dataclass
class TauRResult:
    """Outcome of one ``tau_r`` maximization.

    ``tau_r`` is the largest value found feasible (the bound itself when the
    bracket is exhausted, ``0`` or ``nan`` otherwise), ``margin`` the LMI
    margin there and ``values`` the certificate at that point.
    """

    status: str
    tau_r: float
    margin: float = math.nan
    iterations: int = 0
    values: dict | None = None
    message: str = ""

    def describe(self) -> str:
        if self.status == BRACKET_EXHAUSTED:
            return f">= {self.tau_r:g}"
        if self.status == OK:
            return f"{self.tau_r:.6g}"
        return self.status


def _feasible(sys, loss, tol):
    res = check_sufficient(sys, loss, tol)
    return res.status == lmi.FEASIBLE, res


def max_tau_r(sys: LtiAdmittance, R, tau_s: float = INF, bracket=(0.0, DEFAULT_UPPER),
              tol_rel: float = 1e-3, cap: float = DEFAULT_CAP,
              tol: float = lmi.DEFAULT_TOL) -> TauRResult:
    """Maximize ``tau_r`` subject to the sufficiency LMI.

    Parameters
    ----------
    sys : LtiAdmittance
    R : array_like
        Diagonal of the actuator resistance matrix.
    tau_s : float
        Leakage time constant (``inf`` allowed).
    bracket : (float, float)
        The lower end must be 0 (the reduced LMI is checked first). The upper
        end is grown tenfold while feasible, up to ``cap``.
    tol_rel : float
        Relative width of the final bracket, in ``(0, 0.1]``.

    Returns
    -------
    TauRResult
        ``ok`` with the largest verified-feasible ``tau_r``,
        ``infeasible_at_zero`` or ``bracket_exhausted``.
    """
    if not 0 < tol_rel <= 0.1:
        raise ValueError("tol_rel must lie in (0, 0.1]")
    if bracket[0] != 0:
        raise ValueError("the bracket must start at tau_r = 0")
    base = LossParams(R, tau_s=tau_s, tau_r=0.0)
    it = 1
    ok, res = _feasible(sys, base, tol)
    if not ok:
        return TauRResult(INFEASIBLE_AT_ZERO, 0.0, res.margin, it)
    best = (0.0, res)

    hi = float(bracket[1])
    while True:
        it += 1
        ok, res = _feasible(sys, base.replace(tau_r=hi), tol)
        if not ok:
            break
        best = (hi, res)
        if hi >= cap:
            return TauRResult(BRACKET_EXHAUSTED, hi, res.margin, it, res.certificate.values)
        hi = min(hi * 10.0, cap)

    lo = best[0]
    if lo == 0.0:
        # walk down to the first feasible decade
        lo = hi
        while True:
            lo /= 10.0
            it += 1
            ok, res = _feasible(sys, base.replace(tau_r=lo), tol)
            if ok:
                best = (lo, res)
                break
            hi = lo
            if lo < DEFAULT_FLOOR:
                r0 = best[1]
                return TauRResult(OK, 0.0, r0.margin, it, r0.certificate.values,
                                  "feasible only at tau_r = 0")
    while hi / lo > 1.0 + tol_rel:
        mid = math.sqrt(lo * hi)
        it += 1
        ok, res = _feasible(sys, base.replace(tau_r=mid), tol)
        if ok:
            lo, best = mid, (mid, res)
        else:
            hi = mid
    return TauRResult(OK, lo, best[1].margin, it, best[1].certificate.values)


@dataclass
class ParetoPoint:
    R_scale: float
    tau_s_inv: float
    result: TauRResult

    def row(self):
        r = self.result
        return [self.R_scale, self.tau_s_inv, r.tau_r, r.status, r.margin]


@dataclass
class ParetoFront:
    """Grid of ``tau_r`` maxima over resistance scalings and leakage rates."""

    R_scales: np.ndarray
    tau_s_inv: np.ndarray
    base_R: np.ndarray
    points: list[ParetoPoint] = field(default_factory=list)

    def grid(self) -> np.ndarray:
        """``tau_r`` maxima as an array indexed ``[R, tau_s_inv]`` (nan where infeasible)."""
        out = np.full((self.R_scales.size, self.tau_s_inv.size), np.nan)
        for p in self.points:
            i = int(np.flatnonzero(self.R_scales == p.R_scale)[0])
            j = int(np.flatnonzero(self.tau_s_inv == p.tau_s_inv)[0])
            if p.result.status in (OK, BRACKET_EXHAUSTED):
                out[i, j] = p.result.tau_r
        return out

    def point(self, i: int, j: int) -> ParetoPoint:
        return self.points[i * self.tau_s_inv.size + j]

    def write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            R_scale, tsi, tr, status, margin = p.row()
            w.writerow([f"{R_scale:.12g}", f"{tsi:.12g}", f"{tr:.12g}", status, f"{margin:.6g}"])

    def to_dict(self):
        return {"R_scales": self.R_scales.tolist(), "tau_s_inv": self.tau_s_inv.tolist(),
                "base_R": self.base_R.tolist(),
                "points": [{"R_scale": p.R_scale, "tau_s_inv": p.tau_s_inv,
                            "tau_r_max": p.result.tau_r, "status": p.result.status,
                            "margin": p.result.margin, "iterations": p.result.iterations,
                            "message": p.result.message} for p in self.points]}


def _solve_point(args):
    sys, R, tsi, tol_rel, bracket, cap, tol = args
    tau_s = INF if tsi == 0 else 1.0 / tsi
    try:
        return max_tau_r(sys, R, tau_s, bracket, tol_rel, cap, tol)
    except Exception as exc:  # recorded per point, the sweep goes on
        return TauRResult(ERROR, math.nan, message=f"{type(exc).__name__}: {exc}")


def sweep(sys: LtiAdmittance, R_scales, tau_s_inv, base_R=None, tol_rel: float = 1e-3,
          bracket=(0.0, DEFAULT_UPPER), cap: float = DEFAULT_CAP,
          tol: float = lmi.DEFAULT_TOL, workers: int = 1) -> ParetoFront:
    """Maximize ``tau_r`` at every ``(R_scale * base_R, 1/tau_s)`` grid point.

    ``tau_s_inv = 0`` stands for no leakage. Points are independent; with
    ``workers > 1`` they are solved in separate processes, and the output
    order is always R-major.
    """
    R_scales = np.asarray(R_scales, dtype=float).ravel()
    tau_s_inv = np.asarray(tau_s_inv, dtype=float).ravel()
    if R_scales.size == 0 or tau_s_inv.size == 0:
        raise ValueError("grids must be non-empty")
    if np.any(R_scales <= 0) or np.any(tau_s_inv < 0):
        raise ValueError("R scalings must be positive and leakage rates non-negative")
    base_R = np.ones(sys.n_p) if base_R is None else np.asarray(base_R, dtype=float)
    keys = [(float(r), float(tsi)) for r in R_scales for tsi in tau_s_inv]
    jobs = [(sys, r * base_R, tsi, tol_rel, bracket, cap, tol) for r, tsi in keys]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_solve_point, jobs))
    else:
        results = [_solve_point(j) for j in jobs]
    front = ParetoFront(R_scales, tau_s_inv, base_R)
    front.points = [ParetoPoint(r, tsi, res) for (r, tsi), res in zip(keys, results)]
    return front
