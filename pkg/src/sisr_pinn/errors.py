"""Exception types shared across the package."""


class SisrError(Exception):
    """Base class for package errors."""


class OutOfRange(SisrError, ValueError):
    """``w`` lies outside the fold interval: the nullcline has one real root."""


class NoMatch(SisrError, ValueError):
    """Timescale-matching target is outside the range of the barrier function."""


class Diverged(SisrError, FloatingPointError):
    """Integration left the divergence box; the step size is too large."""


class Timeout(SisrError, RuntimeError):
    """A Monte-Carlo sample exceeded its step budget."""


class NonFinite(SisrError, FloatingPointError):
    """A network activation or loss became NaN or infinite."""


class DegenerateReference(SisrError, ValueError):
    """Reference sequence has zero variance; NRMSE is undefined."""


class GridMismatch(SisrError, ValueError):
    """Two curves were compared on different sigma grids."""


class ConfigError(SisrError, ValueError):
    """Bad configuration file or value."""
