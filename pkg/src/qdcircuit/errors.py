"""Exception hierarchy shared by all qdcircuit modules."""


class QDCircuitError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"


class ValidationError(QDCircuitError, ValueError):
    """A value violates an invariant of its domain type."""

    kind = "violated-invariant"

    def __init__(self, field, constraint, value=None):
        self.field = field
        self.constraint = constraint
        self.value = value
        msg = f"{field}: {constraint}"
        if value is not None:
            msg += f" (got {value!r})"
        super().__init__(msg)


class ConfigError(QDCircuitError, ValueError):
    kind = "invalid-config"


# correlator
class UnknownChannelError(QDCircuitError, KeyError):
    kind = "unknown-channel"


class EmptyChannelError(QDCircuitError, ValueError):
    kind = "empty-channel"


class ZeroRateError(QDCircuitError, ValueError):
    kind = "zero-rate"


class OverlappingWindowsError(QDCircuitError, ValueError):
    kind = "overlapping-windows"


class WindowOutOfRangeError(QDCircuitError, ValueError):
    kind = "window-out-of-range"


# fitting
class FitError(QDCircuitError, RuntimeError):
    kind = "fit-failed"


class FitFailedError(FitError):
    kind = "fit-failed"


class NonFiniteResidualError(FitError):
    kind = "non-finite-residual"


class SingularNormalMatrixError(FitError):
    """The normal matrix at the solution is rank deficient.

    ``result`` holds the best parameters found, with NaN standard errors for
    the directions that the data do not constrain.
    """

    kind = "singular-normal-matrix"

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonNormalizedInputError(QDCircuitError, ValueError):
    kind = "non-normalized-input"


class InconsistentBinningError(QDCircuitError, ValueError):
    kind = "inconsistent-binning"


class EmptyRangeError(QDCircuitError, ValueError):
    kind = "empty-range"


class InsufficientAnglesError(QDCircuitError, ValueError):
    kind = "insufficient-angles"


class NonPositiveInputError(QDCircuitError, ValueError):
    kind = "nonpositive-input"


class DisjointAxesError(QDCircuitError, ValueError):
    kind = "disjoint-axes"


class ZeroTotalError(QDCircuitError, ValueError):
    kind = "zero-total"


class ZeroSideAreaError(QDCircuitError, ZeroDivisionError):
    kind = "zero-side-area"


# localizer
class RoiTooSmallError(QDCircuitError, ValueError):
    kind = "roi-too-small"


class MarkerNotFoundError(QDCircuitError, LookupError):
    kind = "marker-not-found"


class AmbiguousMarkerError(QDCircuitError, LookupError):
    kind = "ambiguous"


class DegenerateGeometryError(QDCircuitError, ValueError):
    kind = "degenerate-geometry"


class TooFewRecordsError(QDCircuitError, ValueError):
    kind = "too-few-records"


# io
class ParseError(QDCircuitError, ValueError):
    """Malformed input file; ``location`` names the line or byte offset."""

    kind = "parse-error"

    def __init__(self, message, path=None, location=None):
        self.path = path
        self.location = location
        where = ""
        if path is not None:
            where += f"{path}"
        if location is not None:
            where += f" at {location}"
        super().__init__(f"{where}: {message}" if where else message)


class VersionMismatchError(ParseError):
    kind = "version-mismatch"


class UnitMismatchError(ParseError):
    kind = "unit-mismatch"
