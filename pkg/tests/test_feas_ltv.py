import math

import numpy as np
import pytest

from spsa import lmi
from spsa.exceptions import GridTooCoarse, UnsupportedRegime
from spsa.feas_lti import check_sufficient
from spsa.feas_ltv import check_ltv, fd_weights, node_margins
from spsa.model import LossParams, LtvAdmittanceGrid

from _systems import scalar_system


def static_grid(d):
    d = np.asarray(d, dtype=float)
    t = np.linspace(0, 1, d.size)
    return LtvAdmittanceGrid(t, np.zeros((d.size, 0, 0)), np.zeros((d.size, 0, 1)),
                             np.zeros((d.size, 1, 0)), d[:, None, None])


def long_constant_grid(sys, loss, refine=1):
    """Constant grid spanning ten slowest shifted time constants at the coarsest allowed spacing."""
    slow = np.min(np.abs(sys.poles().real) - loss.inv_tau_s)
    horizon = 10.0 / slow
    dt = 0.1 / np.linalg.norm(sys.A, 2)
    N = int(math.ceil(horizon / dt)) * refine + 1
    return LtvAdmittanceGrid.constant(sys, np.linspace(0, horizon, N))


def test_fd_weights_exact_on_linear():
    dt = 0.1
    p = 3.0 + 2.0 * dt * np.arange(6)
    for scheme in ("central", "one_sided"):
        for k in range(6):
            w = fd_weights(6, k, dt, scheme)
            assert sum(c * p[j] for j, c in w.items()) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fd_weights(6, 0, dt, "backward")


def test_time_varying_static_passive():
    t = np.linspace(0, 1, 12)
    d = 0.5 + 0.4 * np.sin(2 * np.pi * t)  # 0 < d(t) < 1/r with r = 1
    v = check_ltv(static_grid(d), LossParams([1.0], tau_r=0.1))
    assert v.status == lmi.FEASIBLE
    assert v.discretized


def test_static_grid_with_one_bad_node():
    d = np.full(8, 0.5)
    d[5] = 1.4
    v = check_ltv(static_grid(d), LossParams([1.0], tau_r=0.1))
    assert v.status == lmi.INFEASIBLE
    assert np.argmin(v.certificate.transmission) == 5


def test_embedding_feasible_constant_certificate():
    sys = scalar_system(-1.0, 1.0, 0.3, 0.3)
    loss = LossParams([1.0], tau_s=20.0, tau_r=0.05)
    lti = check_sufficient(sys, loss)
    assert lti.status == lmi.FEASIBLE
    v = check_ltv(long_constant_grid(sys, loss), loss)
    assert v.status == lmi.FEASIBLE
    assert v.margin == pytest.approx(lti.margin, rel=0.2)


def test_embedding_infeasible():
    sys = scalar_system(-1.0, 1.0, -0.8, 0.3)
    loss = LossParams([1.0], tau_s=20.0, tau_r=0.05)
    assert check_sufficient(sys, loss).status == lmi.INFEASIBLE
    assert check_ltv(long_constant_grid(sys, loss), loss).status == lmi.INFEASIBLE


def test_one_sided_scheme_agrees():
    sys = scalar_system(-1.0, 1.0, 0.3, 0.3)
    loss = LossParams([1.0], tau_s=20.0, tau_r=0.05)
    v = check_ltv(long_constant_grid(sys, loss), loss, fd_scheme="one_sided")
    assert v.status == lmi.FEASIBLE
    assert v.fd_scheme == "one_sided"


def test_certificate_locality():
    sys = scalar_system(-1.0, 1.0, 0.3, 0.3)
    loss = LossParams([1.0], tau_s=20.0, tau_r=0.05)
    g = LtvAdmittanceGrid.constant(sys, np.linspace(0, 2, 21))
    v = check_ltv(g, loss)
    cert = v.certificate
    ly0, tr0 = node_margins(g, loss, cert.P, cert.X, scale=cert.scale)
    assert np.allclose(ly0, cert.lyapunov) and np.allclose(tr0, cert.transmission)
    P = cert.P.copy()
    P[15] *= 1.5
    ly1, tr1 = node_margins(g, loss, P, cert.X, scale=cert.scale)
    changed = set(np.flatnonzero(np.abs(ly1 - ly0) > 0)) | set(np.flatnonzero(np.abs(tr1 - tr0) > 0))
    assert changed <= {14, 15, 16}
    assert 15 in changed


def test_coarse_grid_rejected():
    sys = scalar_system(-50.0, 1.0, 1.0, 0.5)
    g = LtvAdmittanceGrid.constant(sys, np.linspace(0, 1, 11))
    with pytest.raises(GridTooCoarse):
        check_ltv(g, LossParams([1.0]))


def test_too_few_nodes():
    with pytest.raises(ValueError):
        check_ltv(static_grid([0.5, 0.5]), LossParams([1.0]))


def test_dynamic_without_transmission_unsupported():
    sys = scalar_system(-1.0, 1.0, 0.3, 0.3)
    g = LtvAdmittanceGrid.constant(sys, np.linspace(0, 0.5, 6))
    with pytest.raises(UnsupportedRegime):
        check_ltv(g, LossParams([1.0], tau_r=math.inf))


def test_verdict_dict_flags_discretization():
    v = check_ltv(static_grid(np.full(5, 0.5)), LossParams([1.0]))
    d = v.to_dict()
    assert d["discretized"] is True
    assert d["grid"]["nodes"] == 5
