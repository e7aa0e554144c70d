"""Exception types raised across the package."""


class McreparError(Exception):
    """Base class for all package errors."""


class DomainError(McreparError, ValueError):
    """A tape operation received a value outside its domain (ln of w <= 0, 1/0)."""


class NonFiniteError(McreparError, ArithmeticError):
    """A forward value overflowed or became NaN."""


class ParameterDomainError(McreparError, ValueError):
    """Distribution parameters are outside the family's parameter space."""


class DegenerateDirectionError(McreparError, ValueError):
    pass


class UnknownPriorError(McreparError, KeyError):
    pass


class UnknownFamilyError(McreparError, KeyError):
    pass


class UnsupportedG(McreparError, ValueError):
    """No parameterization tuple is known for the requested g and family."""


class UnsupportedTermError(McreparError, ValueError):
    pass


class UnsupportedPosteriorError(McreparError, ValueError):
    pass


class UnsupportedTaskError(McreparError, ValueError):
    pass


class NoConstantStatError(McreparError, ValueError):
    pass


class DivergenceError(McreparError, ArithmeticError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ConfigError(McreparError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
