"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code convention (2 = validation/usage,
3 = infeasible search space, 1 = anything else at runtime).
"""


class CfauditError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CfauditError):
    """Schema file or schema object is structurally invalid."""


class InstanceValidationError(CfauditError):
    """An instance does not conform to its schema.

    `field_errors` holds (feature_name, message) pairs so callers can
    surface per-field diagnostics.
    """

    def __init__(self, field_errors):
        self.field_errors = list(field_errors)
        detail = "; ".join(f"{name}: {msg}" for name, msg in self.field_errors)
        super().__init__(f"invalid instance: {detail}")


class ConstraintError(CfauditError):
    """A constraint override is inconsistent with the schema."""

    def __init__(self, field_errors):
        self.field_errors = list(field_errors)
        detail = "; ".join(f"{name}: {msg}" for name, msg in self.field_errors)
        super().__init__(f"invalid constraints: {detail}")


class DataError(CfauditError):
    """A dataset file cannot be parsed or violates its schema."""


class DistanceError(CfauditError):
    """Distance is undefined for the given operands."""


class TrainingError(CfauditError):
    """Model training cannot proceed or diverged."""


class PredictorProtocolError(CfauditError):
    """An external predictor violated the wire protocol."""


class InfeasibleSpaceError(CfauditError):
    """No feasible candidate exists (or none was found within budget)."""

    def __init__(self, message, attempts=None):
        self.attempts = attempts
        super().__init__(message)


class TimeBudgetError(CfauditError):
    """The time budget ran out before any feasible candidate was found."""


class AuditError(CfauditError):
    """An audit could not produce a report."""
