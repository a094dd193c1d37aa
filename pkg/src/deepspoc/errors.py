"""Exception hierarchy. All library errors derive from :class:`DeepSPoCError`."""


class DeepSPoCError(Exception):
    pass


class InvalidParameterError(DeepSPoCError, ValueError):
    pass


class DimensionError(DeepSPoCError, ValueError):
    pass


class ConfigurationError(DeepSPoCError, ValueError):
    pass


class CapabilityError(DeepSPoCError, TypeError):
    """The model lacks the capability an operation needs."""


class DegenerateDensityError(DeepSPoCError, ArithmeticError):
    pass


class SamplingError(DeepSPoCError, RuntimeError):
    def __init__(self, msg, acceptance_rate=0.0):
        super().__init__(msg)
        self.acceptance_rate = acceptance_rate


class NumericError(DeepSPoCError, ArithmeticError):
    pass


class BlowUpError(NumericError):
    def __init__(self, msg, particle=None, node=None):
        super().__init__(msg)
        self.particle = particle
        self.node = node


class EmptyBatchError(DeepSPoCError, ValueError):
    pass


class HypothesisViolation(DeepSPoCError, ValueError):
    """A theorem's hypothesis does not hold, so the bound is undefined."""
