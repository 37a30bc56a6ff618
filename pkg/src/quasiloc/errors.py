"""Exception types raised by the laboratory."""


class LabError(Exception):
    """Base class for every error raised by quasiloc."""


class DomainError(LabError, ValueError):
    """A complex argument left the strip on which the potential is certified."""


class StepFailure(LabError, RuntimeError):
    """The adaptive integrator could not meet its tolerance above the minimum step."""


class PositivityError(LabError):
    """A Lyapunov estimate fell below the positivity floor required by a check."""


class ApHypothesisFailure(LabError):
    """The Avalanche Principle hypotheses failed on too many phases."""


class WronskianNearZero(LabError, ArithmeticError):
    """The energy is numerically a Dirichlet eigenvalue; the Green's function is ill-defined."""


class HypothesisFailure(LabError):
    """A caller-supplied hypothesis (e.g. a norm lower bound) does not hold."""


class VerificationFailure(LabError):
    """A sampled bound failed.  ``worst`` carries the offending sample."""

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class NoSignChange(LabError, ValueError):
    """The energy bracket does not enclose a sign change."""


class QuadratureUnresolved(LabError):
    """Coefficient quadrature did not converge under refinement."""


class SurrogateInaccurate(LabError):
    """The polynomial surrogate misses its sampled deviation budget."""


class BudgetExceeded(LabError):
    """A lattice or coefficient enumeration would exceed its size budget."""


class MissingColumn(LabError, KeyError):
    """A CSV handed to the plotter lacks a declared column."""


class ConfigError(LabError, ValueError):
    """Experiment configuration failed validation; the message names the field."""
