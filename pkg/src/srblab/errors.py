"""Exception hierarchy shared by every srblab module."""


class SRBLabError(Exception):
    """Base class for all srblab errors."""


class DomainError(SRBLabError, ValueError):
    """A point lies outside the domain (after wrapping periodic axes)."""


class IncompatibleError(SRBLabError, ValueError):
    """Measures, partitions or families that do not share a domain."""


class RegistryError(SRBLabError, KeyError):
    """Unknown dynamical system name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class OrbitDivergenceError(SRBLabError, ArithmeticError):
    """A step produced a non-finite value or left the domain.

    ``index`` is the number of steps applied when the failure was detected and
    ``partial`` carries whatever results were completed before it.
    """

    def __init__(self, message, index, partial=None):
        super().__init__(message)
        self.index = index
        self.partial = partial


class ConfigError(SRBLabError):
    """Invalid experiment configuration."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
