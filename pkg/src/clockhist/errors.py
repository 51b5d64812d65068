"""Exception types shared across the package.

Plain ``ValueError`` is used for programmer errors (bad shapes, unknown
labels).  ``GuardError`` subclasses mark *numerical* guards tripping at
runtime: conditioning on a null-probability clock reading, a matrix failing
its hermiticity/unitarity certificate, a degenerate envelope.  The CLI maps
them to a dedicated exit code.
"""


class GuardError(Exception):
    """A numerical guard tripped (not a usage error)."""


class NullConditioningError(GuardError):
    """Conditioning on an outcome or clock reading with (near-)zero weight."""


class ToleranceError(GuardError):
    """A certificate check (hermitian / unitary / Kraus-complete) failed."""


class ScenarioError(ValueError):
    """A scenario file failed validation; carries a path into the document."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
