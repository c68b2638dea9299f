"""Exception hierarchy shared across the package."""


class TwcrlError(Exception):
    """Base class for every error raised by this package."""


class InvalidTrajectory(TwcrlError, ValueError):
    pass


class InvalidHorizon(TwcrlError, ValueError):
    pass


class ValidationError(TwcrlError, ValueError):
    pass


class ParseError(TwcrlError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingGoals(TwcrlError, ValueError):
    pass


class OutOfRange(TwcrlError, ValueError):
    pass


class DimensionMismatch(TwcrlError, ValueError):
    pass


class MapError(TwcrlError, ValueError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} at row {position[0]}, col {position[1]}"
        super().__init__(message)


class ExpertStuck(TwcrlError, RuntimeError):
    pass


class NoData(TwcrlError, ValueError):
    pass


class OptimDiverged(TwcrlError, FloatingPointError):
    pass
