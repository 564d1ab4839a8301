"""Exception types raised by the library."""


class BfstabError(Exception):
    """Base class for library errors."""


class ConfigError(BfstabError, ValueError):
    """Invalid experiment configuration."""


class SpectrumError(BfstabError):
    """Not enough eigenpairs computed to resolve the unstable set."""


class ConvergenceError(BfstabError):
    """An iterative eigen-solve did not converge within its sweep budget."""


class ResonanceError(BfstabError):
    """A shifted elliptic problem is singular; raise gamma."""


class SingularGainError(BfstabError):
    """The sum of the scaled Gram matrices is numerically singular."""
