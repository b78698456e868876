"""Exception hierarchy shared by the simulation modules."""


class WDistillError(Exception):
    """Base class for all package errors."""


class DimensionError(WDistillError, ValueError):
    """Subsystem dimensions are incompatible with the requested operation."""


class LabelError(WDistillError, KeyError):
    """Unknown or colliding subsystem label."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NormalizationError(WDistillError, ValueError):
    """A state expected to be normalized is not."""


class UnitarityError(WDistillError, ValueError):
    """A matrix passed as a unitary fails the unitarity check."""


class CoefficientError(WDistillError, ValueError):
    """W-class coefficients violate normalization or ordering."""


class SolverError(WDistillError, RuntimeError):
    """No root of the U2 mixing-parameter quadratic satisfies the linear condition."""


class ProtocolInputError(WDistillError, ValueError):
    """A protocol stage received a state it cannot act on."""


class TruncationError(WDistillError, ValueError):
    """Evolution would populate a Fock level above the truncation."""


class LocalityViolation(WDistillError):
    """A joint operation was requested on subsystems held at different locations."""


class RegistryError(WDistillError, ValueError):
    """Ownership registry is inconsistent with the requested action."""
