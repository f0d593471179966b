class Nse3dError(Exception):
    """Base class for solver and analysis errors."""


class GridMismatch(Nse3dError):
    pass


class InvalidFieldSpec(Nse3dError):
    pass


class AnalysisInputError(Nse3dError, ValueError):
    pass


class NonConvergence(Nse3dError):
    def __init__(self, iterations, increment, message=None):
        self.iterations = iterations
        self.increment = increment
        super().__init__(message or
                         f"Fixed-point iteration did not converge after {iterations} iterations "
                         f"(last relative H1 increment {increment!r}); reduce k.")


class RestrictionViolated(Nse3dError):
    pass


class Infeasible(Nse3dError):
    def __init__(self, tag, message):
        self.tag = tag
        super().__init__(message)


class InfeasibleConfig(Nse3dError):
    def __init__(self, tag, message):
        self.tag = tag
        super().__init__(message)


class BlowUp(Nse3dError):
    pass


class ConfigError(Nse3dError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        super().__init__(message)
