"""Feasibility analysis of self-powered synthetic admittances.

An admittance is realized by actuators that draw power from a lossy storage
element. The package decides, for given resistive, leakage and transmission
losses, whether the storage can sustain every port-voltage input.
"""

__version__ = "0.1.0"

from .model import INF, FoLeadLag, LossParams, LtiAdmittance, LtvAdmittanceGrid  # noqa: E402
from .feas_lti import check_lti, check_necessary_hinf, check_sufficient, hinf_norm  # noqa: E402
from .feas_ltv import check_ltv  # noqa: E402
from .energy import simulate, storage_power  # noqa: E402
from .pareto import max_tau_r, sweep  # noqa: E402
from .fo import backbone, design_from_specs, fo_max_tau_r, max_leakage_rate  # noqa: E402

__all__ = [
    "INF", "FoLeadLag", "LossParams", "LtiAdmittance", "LtvAdmittanceGrid",
    "check_lti", "check_necessary_hinf", "check_sufficient", "hinf_norm", "check_ltv",
    "simulate", "storage_power", "max_tau_r", "sweep", "backbone", "design_from_specs",
    "fo_max_tau_r", "max_leakage_rate",
]
