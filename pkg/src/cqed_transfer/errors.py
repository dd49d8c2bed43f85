"""Exception hierarchy shared across the package."""


class CqedError(Exception):
    """Base class for all package errors."""


class ValidationError(CqedError, ValueError):
    """An input violates a documented precondition."""


class CompositionError(ValidationError):
    """Two registers cannot be combined (e.g. duplicate subsystem names)."""


class ShapeError(ValidationError):
    """Registers or matrices have incompatible shapes."""


class LabelLookupError(CqedError, KeyError):
    """A subsystem label is not present in the register."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"


class NotProportionalError(CqedError, ValueError):
    """Two states are not equal up to a global phase."""


class CapacityError(ValidationError):
    """Requested register exceeds the configured size cap."""


class ScheduleError(ValidationError):
    """A gate schedule is structurally invalid."""


class ConvergenceError(CqedError, RuntimeError):
    """A numerical procedure failed to converge."""


class StepSizeError(ConvergenceError):
    """Integrator trace drift exceeded tolerance; use more steps."""


class CutoffError(ConvergenceError):
    """Results depend on the Fock-space truncation."""
