"""Exception types shared across the package."""


class RoadboundError(Exception):
    """Base class for all package errors."""


class DegenerateSample(RoadboundError):
    """Three sample points do not determine a unique conic."""


class NoIntercept(RoadboundError):
    """Boundary model never crosses the radar y-axis."""


class ImaginaryRadius(RoadboundError):
    """Coefficients describe a conic with no real points."""


class ZeroVector(RoadboundError):
    """Coefficient vector is identically zero."""


class EigenFailure(RoadboundError):
    """Jacobi iteration did not converge within the sweep cap."""


class SingularState(RoadboundError):
    """Concentration matrix could not be inverted even after regularization."""


class AllZeroRow(RoadboundError):
    """Every class likelihood of a detection is zero or non-finite."""


class InsufficientOutliers(RoadboundError):
    """Fewer than three detections carry positive outlier weight."""


class NoTruth(RoadboundError):
    """No ground truth points were associated with an estimate."""


class InvalidSpec(RoadboundError):
    """Scene specification is inconsistent."""


class ConfigError(RoadboundError):
    """Configuration document is malformed or holds an unknown key."""


class DataError(RoadboundError):
    """Input data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
