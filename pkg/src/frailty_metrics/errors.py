"""Exception taxonomy shared across the pipeline.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), malformed or missing input data (exit 3), and numerical failures
during model fitting (exit 4).
"""


class FrailtyMetricsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FrailtyMetricsError):
    """Invalid run configuration or command-line arguments."""


class DataError(FrailtyMetricsError):
    """Malformed, inconsistent, or missing input data."""


class NumericError(FrailtyMetricsError):
    """Numerical failure while fitting or transforming model quantities."""


# ---------------------------------------------------------------------------
# volume parsing

class HeaderTooShort(DataError):
    pass


class BadMagic(DataError):
    """Byte stream does not carry the single-file NIfTI-1 signature."""


class UnsupportedDatatype(DataError):
    pass


class BadDims(DataError):
    pass


class PayloadTruncated(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class IllegalLabel(DataError):
    pass


class NoTumorVoxels(DataError):
    """Segmentation contains no tumor-labelled voxel, so view weights are undefined."""


# ---------------------------------------------------------------------------
# views and aggregation

class ZeroSampleCount(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# ---------------------------------------------------------------------------
# predictor

class TooFewSamples(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class DuplicatePatient(DataError):
    pass


class NonNumericField(DataError):
    pass


class MissingColumn(DataError):
    pass


# ---------------------------------------------------------------------------
# cross-validation

class TooFewPatients(DataError):
    pass


class DuplicateIds(DataError):
    pass


class MissingCase(DataError):
    pass


class PredictorFailure(DataError):
    """Wraps a plugin exception with patient / fold context."""


# ---------------------------------------------------------------------------
# cohort table

class BadEnumValue(DataError):
    """Field value outside its allowed domain (enums, flags, bounded numerics)."""


class NonPositiveTime(DataError):
    pass


class EmptyCohortAfterExclusion(DataError):
    pass


class MissingDiscrepancy(DataError):
    pass


class MissingGrade(DataError):
    pass


# ---------------------------------------------------------------------------
# regression / survival numerics

class DegenerateX(NumericError):
    """Zero variance in the regressor, so a least-squares line is undefined."""


class DegenerateResiduals(NumericError):
    """Residual spread too small to normalize."""


class DimensionMismatch(NumericError):
    pass


class NoEvents(NumericError):
    pass


class SingularInformation(NumericError):
    """Observed information is not positive definite (constant or collinear column)."""


class MonotoneLikelihood(NumericError):
    """Partial likelihood increases without bound (perfect separation)."""


class NonFiniteZ(NumericError):
    pass


# ---------------------------------------------------------------------------
# reporting

class LabelMismatch(DataError):
    pass


class EmptyRows(DataError):
    pass


class NonPositiveHR(DataError):
    pass


class EmptyTable(DataError):
    pass


# ---------------------------------------------------------------------------
# synthetic data

class IoFailure(DataError):
    pass
