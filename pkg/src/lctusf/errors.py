"""Exception types raised across the package."""


class LctError(Exception):
    """Base class for all package errors."""


class DeterminantError(LctError, ValueError):
    pass


class DegenerateB(LctError, ValueError):
    pass


class GridError(LctError, ValueError):
    pass


class RankDeficient(LctError):
    """The structured data matrix has numerical rank below the claimed fold count."""


class EstimatorDiverged(LctError):
    pass


class IllConditioned(LctError):
    pass


class LengthMismatch(LctError, ValueError):
    pass


class ConfigError(LctError, ValueError):
    pass
