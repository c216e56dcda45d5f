class SubsidenceError(Exception):
    category = 'error'


# Input data
class DataError(SubsidenceError):
    category = 'data'


class SchemaError(DataError):
    def __init__(self, source: str, column: str):
        super().__init__(f"{source}: missing column '{column}'")
        self.source = source
        self.column = column


class DuplicateKey(DataError):
    pass


class InvariantViolation(DataError):
    def __init__(self, violations):
        self.violations = list(violations)
        preview = "; ".join(f"{town} {year}: {reason}" for town, year, reason in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{len(self.violations)} invariant violations: {preview}{more}")


class EmptySeries(DataError):
    pass


class MissingCell(DataError):
    pass


class InvalidGeometry(DataError):
    pass


class IncompleteCoverage(DataError):
    pass


class KeyMismatch(DataError):
    pass


class UnassignedTown(DataError):
    pass


class ReferencePeriodError(DataError):
    pass


# Climate indices
class ClimateIndexError(SubsidenceError):
    category = 'index'


class DegenerateSample(ClimateIndexError):
    pass


class MissingStandardizer(ClimateIndexError):
    pass


class IncompleteYear(ClimateIndexError):
    pass


# Model fitting and prediction
class ModelError(SubsidenceError):
    category = 'model'


class NonConvergence(ModelError):
    pass


class SeparationError(NonConvergence):
    pass


class SingularDesign(ModelError):
    pass


class BadResponse(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class QuasiLikelihoodOnly(ModelError):
    pass


class PowerOutOfRange(ModelError):
    pass


class BoundaryEstimate(ModelError):
    pass


class InvalidParam(ModelError):
    pass


class ModelIncompatible(ModelError):
    pass


class MissingModel(ModelError):
    pass


class NoValidSplit(ModelError):
    pass


# Cross-validation
class ValidationError(SubsidenceError):
    category = 'validation'


class InsufficientHistory(ValidationError):
    pass


class NoValidationFold(ValidationError):
    pass


class InvalidConfig(SubsidenceError):
    category = 'config'


EXIT_CODES = {
    'data': 3,
    'index': 4,
    'model': 5,
    'validation': 6,
    'config': 7,
}
