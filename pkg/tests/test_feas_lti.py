import json
import math

import numpy as np
import pytest

from spsa import lmi
from spsa.exceptions import EquivalenceViolation
from spsa.feas_lti import (check_lti, check_necessary_hinf, check_necessary_lmi,
                           check_sufficient, check_theorem4_equivalence, hinf_norm,
                           recheck_certificate)
from spsa.io import bundled_path
from spsa.model import LossParams, LtiAdmittance, eval_tf_lti

from _systems import random_system, scalar_system


def grid_sup(sys, loss, points=16384):
    """Dense-grid supremum of ``||I - 2 R^1/2 Y(jw - 1/tau_s) R^1/2||`` built from ``Y`` itself."""
    rh = np.sqrt(loss.R)
    lam = np.abs(sys.poles()) if sys.n else np.array([1.0])
    w = np.concatenate([[0.0], np.geomspace(max(lam.min(), 1e-3) / 1e3, lam.max() * 1e3, points - 1)])
    best = 0.0
    for wi in w:
        Y = eval_tf_lti(sys, complex(-loss.inv_tau_s, wi))
        M = np.eye(sys.n_p) - 2 * rh[:, None] * Y * rh[None, :]
        best = max(best, np.linalg.norm(M, 2))
    M_inf = np.eye(sys.n_p) - 2 * rh[:, None] * sys.D * rh[None, :]
    return max(best, np.linalg.norm(M_inf, 2))


def building():
    with open(bundled_path("building.json")) as fh:
        d = json.load(fh)
    return LtiAdmittance(d["A"], d["B"], d["C"], d["D"])


def test_building_design_point():
    v = check_lti(building(), LossParams([1.0, 1.0], tau_s=10.0, tau_r=0.075))
    assert v.sufficient_status == lmi.FEASIBLE
    assert v.necessary.passed


def test_static_region_examples():
    loss = LossParams([1.0], tau_r=math.inf)
    assert check_sufficient(LtiAdmittance.static([[0.5]]), loss).status == lmi.FEASIBLE
    assert check_sufficient(LtiAdmittance.static([[1.5]]), loss).status == lmi.INFEASIBLE


def test_positive_real_first_order():
    sys = scalar_system(-1.0, 1.0, 1.0, 1.0)
    res = check_sufficient(sys, LossParams([0.1], tau_r=0.0))
    assert res.status == lmi.FEASIBLE


def test_hinf_first_order_unit_norm():
    sys = scalar_system(-1.0, 1.0, 1.0, 0.0)
    nec = check_necessary_hinf(sys, LossParams([0.25]))
    assert nec.norm == pytest.approx(1.0, rel=1e-8)
    assert nec.passed


def test_hinf_static():
    for d, r in ((0.0, 1.0), (0.3, 2.0), (0.5, 1.0), (1.0, 1.0)):
        nec = check_necessary_hinf(LtiAdmittance.static([[d]]), LossParams([r]))
        assert nec.norm == pytest.approx(abs(2 * r * d - 1), abs=1e-12)
        assert nec.passed


def test_active_admittance_fails():
    sys = scalar_system(-1.0, 1.0, -1.0, 0.0)
    loss = LossParams([1.0])
    nec = check_necessary_hinf(sys, loss)
    assert not nec.passed
    assert nec.norm == pytest.approx(3.0, rel=1e-8)
    assert check_necessary_lmi(sys, loss).status == lmi.INFEASIBLE
    rep = check_theorem4_equivalence(sys, loss)
    assert rep.sufficient.status == lmi.INFEASIBLE and rep.agree


def test_necessary_lmi_examples():
    assert check_necessary_lmi(LtiAdmittance.static([[0.5]]), LossParams([1.0])).status == lmi.FEASIBLE
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 5:
        sys = random_system(rng, 3, 1, gain=0.3)
        loss = LossParams([0.5])
        nec = check_necessary_hinf(sys, loss)
        if nec.norm <= 1 - 1e-3:
            assert check_necessary_lmi(sys, loss).status == lmi.FEASIBLE
            checked += 1


def test_boundary_static_is_marginal():
    for d in (0.0, 1.0):
        rep = check_theorem4_equivalence(LtiAdmittance.static([[d]]), LossParams([1.0]))
        assert rep.agree in (True, None)
        assert abs(rep.sufficient.margin) < 1e-6


def test_equivalence_needs_zero_tau_r():
    with pytest.raises(ValueError):
        check_theorem4_equivalence(LtiAdmittance.static([[0.5]]), LossParams([1.0], tau_r=0.1))


def test_hinf_against_dense_grid():
    rng = np.random.default_rng(31)
    for _ in range(8):
        sys = random_system(rng, int(rng.integers(1, 5)), int(rng.integers(1, 3)))
        loss = LossParams(rng.uniform(0.2, 2, sys.n_p), tau_s=float(rng.choice([math.inf, 10.0])))
        nec = check_necessary_hinf(sys, loss)
        ref = grid_sup(sys, loss, 4096)
        # the grid can only underestimate the supremum
        assert nec.norm >= ref * (1 - 1e-9)
        assert nec.norm == pytest.approx(ref, rel=1e-3)


def test_hinf_norm_rejects_unstable():
    with pytest.raises(ValueError):
        hinf_norm([[1.0]], [[1.0]], [[1.0]], [[0.0]])


def test_shift_destabilizes():
    sys = scalar_system(-0.5, 1.0, 1.0, 0.5)
    nec = check_necessary_hinf(sys, LossParams([1.0], tau_s=1.0))
    assert not nec.passed and nec.witness is not None


def test_sufficient_implies_necessary():
    rng = np.random.default_rng(41)
    for _ in range(15):
        sys = random_system(rng, int(rng.integers(0, 4)), int(rng.integers(1, 3)), gain=rng.uniform(0.1, 2))
        loss = LossParams(rng.uniform(0.2, 1.5, sys.n_p), tau_s=10.0, tau_r=float(rng.choice([0.0, 0.05])))
        v = check_lti(sys, loss)
        assert v.consistent


def test_certificate_monotonicity():
    sys = building()
    base = LossParams([1.0, 1.0], tau_s=10.0, tau_r=0.05)
    res = check_sufficient(sys, base)
    assert res.feasible
    vals = res.certificate.values
    for other in (base.replace(R=[0.5, 0.8]), base.replace(tau_s=20.0),
                  base.replace(tau_r=0.02), base.replace(tau_s=math.inf, tau_r=0.01, R=[0.3, 0.3])):
        cert = recheck_certificate(sys, other, vals)
        worse = max(cert.worst_eigs[k] for k in ("lyapunov", "transmission"))
        base_worst = max(res.certificate.worst_eigs[k] for k in ("lyapunov", "transmission"))
        assert worse <= base_worst + 1e-12


def test_structural_infeasibility_without_transmission():
    sys = scalar_system(-1.0, 1.0, 1.0, 0.5)
    v = check_lti(sys, LossParams([1.0], tau_r=math.inf))
    assert v.sufficient_status == lmi.INFEASIBLE
    assert "structure" in v.note


def test_verdict_json_round_trip():
    v = check_lti(scalar_system(-1.0, 1.0, 1.0, 1.0), LossParams([0.1], tau_s=5.0, tau_r=0.01))
    d = json.loads(json.dumps(v.to_dict(), default=float))
    assert d["sufficient"] == "feasible" and d["necessary"] == "pass"
    vals = {k: np.array(x) for k, x in d["certificate"]["values"].items()}
    cert = recheck_certificate(scalar_system(-1.0, 1.0, 1.0, 1.0),
                               LossParams([0.1], tau_s=5.0, tau_r=0.01), vals)
    assert cert.margin == pytest.approx(d["certificate"]["margin"], rel=1e-9)


def test_equivalence_violation_is_raised(monkeypatch):
    import spsa.feas_lti as fl

    real = fl.check_necessary_lmi

    def flipped(sys, loss, tol=lmi.DEFAULT_TOL):
        r = real(sys, loss, tol)
        r.status = lmi.INFEASIBLE
        return r

    monkeypatch.setattr(fl, "check_necessary_lmi", flipped)
    with pytest.raises(EquivalenceViolation):
        check_theorem4_equivalence(LtiAdmittance.static([[0.5]]), LossParams([1.0]))
