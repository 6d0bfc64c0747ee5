# core/errors.py - Omega Provisioner exception hierarchy
"""
Every failure the provisioner or the simulators can raise.

The CLI maps the three families to exit codes:
InputError -> 1, VerificationError -> 2. SimulationError means a caller
broke a precondition and is reported as an input problem too.
"""


class ProvisionerError(Exception):
    """Base class for all Omega Provisioner errors."""
    pass


# --- Input errors (bad files, bad values) ---

class InputError(ProvisionerError):
    pass


class MalformedIni(InputError):
    """INI text that configparser cannot structure (no section header, broken header)."""
    pass


class InvalidValue(InputError):
    pass


class FilterSyntax(InputError):
    pass


class UnknownPriorityClass(InputError):
    pass


class SchemaError(InputError):
    """A scenario or record document failed validation at `path`."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


# --- Simulation errors (broken preconditions inside the simulators) ---

class SimulationError(ProvisionerError):
    pass


class IllegalTransition(SimulationError):
    pass


class UnknownNode(SimulationError):
    pass


class ShapeUnsatisfiable(SimulationError):
    pass


# --- Verification errors ---

class VerificationError(ProvisionerError):
    pass


class InvariantViolation(VerificationError):
    """Raised mid-run when a cross-module invariant breaks. `event` is the last logged event."""

    def __init__(self, message: str, event=None):
        self.event = event
        super().__init__(message)
