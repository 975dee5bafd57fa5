"""Exception types shared across the library."""


class Op3DError(Exception):
    """Base class for every error raised by this package."""


class AllPointsCoincident(Op3DError):
    """The geometry has zero spatial extent and cannot be normalized."""


class NonUnitQuaternion(Op3DError):
    """A rotation quaternion is not unit-norm."""


class NotCentered(Op3DError):
    """Covariance requires the input centroid to sit at the origin."""


class ParseError(Op3DError):
    """A geometry file is malformed; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDataset(Op3DError):
    """No samples were found under the source directory."""


class UnreadableSample(Op3DError):
    """A sample file could not be loaded; carries its path."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"{path}: {reason}" if reason else str(path))


class UnknownDataset(Op3DError):
    """The requested benchmark split is not defined."""


class EmptyProjection(Op3DError):
    """No geometry fell inside the camera frustum."""


class StyleUnsupportedForInput(Op3DError):
    """The projection style cannot be produced from this input kind."""


class TimestepOutOfRange(Op3DError):
    """Diffusion timestep outside [1, T]."""


class NoTrials(Op3DError):
    """A matching score needs at least one denoising trial."""


class EmptyClassSet(Op3DError):
    """Classification requires at least one candidate class."""


class MatcherUnavailable(Op3DError):
    """The external matcher worker could not be reached."""


class ProtocolError(Op3DError):
    """The external matcher sent an ill-formed or error response."""


class EmptyTemplateBank(Op3DError):
    """The reference matcher has no stored templates for a class."""


class EmptyPredictions(Op3DError):
    """Metrics need at least one labeled prediction."""


class ClassWithNoSamples(Op3DError):
    """A class in the evaluation set has no predictions to score."""


class StyleSetMismatch(Op3DError):
    """Style ensembling received inconsistent style sets across classes."""
