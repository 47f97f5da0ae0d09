"""Exception hierarchy shared by all modules."""


class IceSimError(Exception):
    """Base class for errors raised by icesim."""


class ParameterError(IceSimError, ValueError):
    """A parameter is outside its documented domain."""


class DegenerateInputError(IceSimError, ValueError):
    """Input data make a quantity undefined (e.g. a zero normalizer)."""


class InconsistentQuadError(IceSimError, ValueError):
    """Four coincidence counts are not reachable by any retarder."""


class FitError(IceSimError, RuntimeError):
    """A least-squares fit did not converge to an admissible optimum."""


class ConfigError(IceSimError, ValueError):
    """A configuration file is malformed or violates its schema."""
