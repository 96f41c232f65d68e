"""Exception types raised by the numerical routines."""


class DegenerateBasisError(ValueError):
    """The DEIM interpolation system is numerically singular."""


class IllConditionedIntersectionError(ArithmeticError):
    """A restricted factor or intersection unfolding has no usable pseudo-inverse."""


class SingularCoreError(ArithmeticError):
    """An unfolding of the DLRA core lost full row rank; reduce the solution rank."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
