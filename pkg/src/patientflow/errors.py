"""Exception hierarchy shared by every module.

Three branches matter to callers: ``ConfigError`` (bad configuration or
usage, CLI exit 2), ``DataError`` (inputs violating a contract, exit 3)
and ``NumericError`` (an algorithm failed to converge in strict mode,
exit 4).
"""


class PatientFlowError(Exception):
    """Base class for all package errors."""


class ConfigError(PatientFlowError):
    """Invalid configuration document or option combination."""


class DataError(PatientFlowError):
    """Input data violates a precondition or invariant."""


class NumericError(PatientFlowError):
    """A numeric routine failed (divergence, singularity) in strict mode."""


# --- event-log ingestion ---------------------------------------------------

class MalformedHeader(DataError):
    pass


class RowParseError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(DataError):
    def __init__(self, field: str, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {message}")
        self.field = field
        self.line = line


class ConflictingProfile(DataError):
    def __init__(self, patient_id: str):
        super().__init__(f"patient {patient_id!r} carries conflicting attributes")
        self.patient_id = patient_id


class MissingProfile(DataError):
    pass


class OverlappingStays(DataError):
    def __init__(self, patient_id: str):
        super().__init__(f"patient {patient_id!r} has overlapping stays")
        self.patient_id = patient_id


class EmptyWindow(DataError):
    pass


# --- synthetic generator ---------------------------------------------------

class OutOfHorizon(DataError):
    pass


# --- inflow models ---------------------------------------------------------

class SeriesTooShort(DataError):
    pass


class InsufficientData(DataError):
    pass


class LengthMismatch(DataError):
    pass


class AllActualsZero(DataError):
    pass


class ModelFitError(DataError):
    """A backtest fit failed; carries the model name for context."""

    def __init__(self, model_name: str, cause: Exception):
        super().__init__(f"{model_name}: {cause}")
        self.model_name = model_name
        self.cause = cause


# --- estimators ------------------------------------------------------------

class NonPositiveSample(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptySample(DataError):
    pass


class NewtonDivergence(NumericError):
    pass


class UnencodableProfile(DataError):
    pass


class ConstantTarget(DataError):
    pass


# --- pathways --------------------------------------------------------------

class UnknownDepartment(DataError):
    pass


class TooFewTrajectories(DataError):
    pass


class UnobservedRow(DataError):
    pass


class MissingAttributeCentroids(DataError):
    pass


# --- engine / harness ------------------------------------------------------

class ModelIncompatible(ConfigError):
    pass


class ForecastTooShort(DataError):
    pass


class WindowMismatch(DataError):
    pass
