"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class DeclarationMismatch(EngineError):
    """Operands were built against different variable/parameter declarations."""


class NotRepresentable(EngineError):
    """The exact result leaves the closed expression class."""


class DivisionByZero(EngineError):
    """Exact or numeric division by zero."""


class DomainError(EngineError):
    """Numeric evaluation outside the declared domain (e.g. sqrt of a negative)."""


class ParseError(EngineError):
    """Malformed expression text or model file."""


class NotInvertibleInClass(NotRepresentable):
    """A quantity that must be inverted (eta, det sigma^T sigma) is not a single term."""


class NonExplosiveRequired(EngineError):
    """A density recipe was requested for a model not declared non-explosive."""


class DoobResidualNonzero(EngineError):
    """A bridge was requested for a pair (V, k) that is not an exact Doob symmetry."""


class PdeResidualNonzero(EngineError):
    """A bridge was requested for a PDE generator that is not an exact symmetry."""


class ClockTooShort(EngineError):
    """A transformed-clock evaluation time exceeds the reachable horizon."""


class DomainExit(EngineError):
    """A simulated path left the declared open domain."""

    def __init__(self, path_id: int, t: float, component: str):
        super().__init__(f"path {path_id} left the domain at t={t:.6g} (component {component})")
        self.path_id = path_id
        self.t = t
        self.component = component


class PotentialMissing(EngineError):
    """A pathwise density identity was requested without an attached potential."""


class SelfTestFailure(EngineError):
    """The built-in catalog failed its startup verification."""
