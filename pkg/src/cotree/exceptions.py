"""Exception types raised across the package."""


class CotreeError(ValueError):
    """Base class for input and numerical errors raised by cotree."""


class DegenerateScaleError(CotreeError):
    """The median heuristic produced a zero kernel scale."""


class SingularDegreeError(CotreeError):
    """A kernel row summed to zero, so the degree matrix is not invertible."""


class InsufficientLandmarksError(CotreeError):
    pass


class InvalidDensityError(CotreeError):
    pass


class TrivialInputError(CotreeError):
    """Fewer than two points were given where a tree is required."""


class ShapeError(CotreeError):
    pass


class EmptySelectionError(CotreeError):
    pass


class ZeroMassError(CotreeError):
    """A row had (numerically) zero mass and cannot be made a histogram."""

    def __init__(self, message, row=None, iteration=None):
        super().__init__(message)
        self.row = row
        self.iteration = iteration


class MarginalError(CotreeError):
    pass


class ParseError(CotreeError):
    """Malformed input file. ``row``/``column`` are 1-based when known."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
