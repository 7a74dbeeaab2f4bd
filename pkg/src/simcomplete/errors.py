"""Exception types raised across the package."""


class NonConvergence(RuntimeError):
    """Eigensolver did not reach the off-diagonal tolerance within its sweep cap."""


class Diverged(RuntimeError):
    """Solver objective became non-finite; the stepsize is too large."""


class DimensionMismatch(ValueError):
    """Operands have incompatible shapes."""


class AllMissingRow(ValueError):
    """A query row has no observed features at all."""


class InvalidRho(ValueError):
    """Missing ratio outside [0, 1)."""


class InvalidRank(ValueError):
    """Factor width outside 1 <= r < n."""


class InvalidK(ValueError):
    """Top-k cutoff cannot be formed from the given fraction and sizes."""


class InvalidBound(ValueError):
    """Factor-norm bound must be positive."""


class EmptyFeature(ValueError):
    """A feature column has no observed values among search rows."""


class DegenerateBaseline(ValueError):
    """The initial matrix already equals the ground truth; the error ratio is undefined."""


class ParseError(ValueError):
    """A CSV cell could not be parsed; carries 1-based row/column location."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class RaggedRows(ParseError):
    """CSV rows have inconsistent lengths."""
