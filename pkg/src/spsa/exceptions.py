"""Exception classes raised by the analysis modules."""


class SpsaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SpsaError, ValueError):
    """Matrix or signal dimensions are inconsistent."""


class SingularResolvent(SpsaError, ArithmeticError):
    """The evaluation frequency coincides with an eigenvalue of A."""


class BranchPoint(SpsaError, ArithmeticError):
    """A fractional-order filter was evaluated at its pole/branch point."""


class Choke(SpsaError):
    """The storage system cannot supply the demanded power.

    Attributes
    ----------
    time, energy, power : float
        Time of the event, stored energy and demanded actuation power there.
    """

    def __init__(self, time, energy, power):
        self.time = float(time)
        self.energy = float(energy)
        self.power = float(power)
        super().__init__(
            f"storage chokes at t={self.time:.9g} s "
            f"(E_s={self.energy:.6g} J, P_e={self.power:.6g} W)")


class StepTooLarge(SpsaError):
    """Step-doubling error estimate exceeded the allowed bound."""


class UnsupportedRegime(SpsaError):
    """The loss parameters select a regime the requested check cannot handle."""


class GridTooCoarse(SpsaError, ValueError):
    """LTV sample spacing is too coarse for the finite-difference scheme."""


class EquivalenceViolation(SpsaError):
    """Sufficient and necessary verdicts disagree where theory says they match."""


class SpecUnachievable(SpsaError, ValueError):
    """No fractional-order lead-lag filter meets the requested peak specs."""


class AnalyticityViolation(SpsaError):
    """The frequency-shifted admittance is not analytic in the right half-plane."""


class SchemaError(SpsaError, ValueError):
    """Input document does not match its schema.

    Attributes
    ----------
    pointer : str
        JSON pointer of the offending field.
    """

    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")
