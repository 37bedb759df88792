import cmath
import math

from hypothesis import given, settings
from hypothesis import strategies as st

from spsa import lmi
from spsa.energy import storage_power
from spsa.feas_lti import check_necessary_hinf, check_sufficient
from spsa.fo import design_from_specs
from spsa.model import LossParams, LtiAdmittance, eval_tf_fo

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=300, deadline=None)
@given(E=pos, tau_r=pos, C_s=pos, frac=st.floats(min_value=-10, max_value=1))
def test_storage_power_balance(E, tau_r, C_s, frac):
    loss = LossParams([1.0], tau_r=tau_r, C_s=C_s)
    P_e = frac * E / (2 * tau_r)
    P_s = storage_power(E, P_e, loss)
    v_s = math.sqrt(2 * E / C_s)
    u_s = -P_s / v_s
    scale = max(abs(P_e), abs(P_s), 1e-300)
    assert abs(P_e + v_s * u_s + loss.R_r * u_s ** 2) <= 1e-9 * scale
    # transmission losses: storage always pays at least the demand
    assert P_s >= P_e - 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(E=pos, tau_r=pos, a=st.floats(0, 1), b=st.floats(0, 1))
def test_storage_power_monotone(E, tau_r, a, b):
    loss = LossParams([1.0], tau_r=tau_r)
    bound = E / (2 * tau_r)
    lo, hi = sorted((a * bound, b * bound))
    assert storage_power(E, lo, loss) <= storage_power(E, hi, loss) + 1e-12 * E / tau_r


@settings(max_examples=150, deadline=None)
@given(d=st.floats(-2, 3), r=st.floats(0.1, 5))
def test_static_region(d, r):
    res = check_sufficient(LtiAdmittance.static([[d]]), LossParams([r], tau_r=math.inf))
    # eigenvalues of the static block are 2d - 2/r and -2d
    dist = min(d, 1 / r - d)
    if res.status == lmi.FEASIBLE:
        assert dist >= 0
    elif res.status == lmi.INFEASIBLE:
        assert dist <= 0
    nec = check_necessary_hinf(LtiAdmittance.static([[d]]), LossParams([r]))
    assert math.isclose(nec.norm, abs(2 * r * d - 1), rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(5, 60), mu=st.floats(0.7, 3), gamma=st.floats(0.1, 10), wm=st.floats(0.1, 10))
def test_design_meets_specs(phi, mu, gamma, wm):
    f = design_from_specs(phi, gamma, wm, mu)
    F = eval_tf_fo(f, 1j * wm)
    assert math.isclose(abs(F), gamma, rel_tol=1e-9)
    assert math.isclose(math.degrees(cmath.phase(F)), phi, abs_tol=1e-8)
    assert math.isclose(math.sqrt(f.omega_L * f.omega_h), wm, rel_tol=1e-12)
