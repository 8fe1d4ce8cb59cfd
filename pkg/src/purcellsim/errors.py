"""Exception and warning types raised across the package.

The CLI maps these onto exit codes: configuration problems -> 1,
numerical failures -> 2, non-convergence -> 3.
"""


class PurcellSimError(Exception):
    exit_code = 2


class ConfigError(PurcellSimError, ValueError):
    exit_code = 1


class NumericalError(PurcellSimError, ArithmeticError):
    exit_code = 2


class ConvergenceError(PurcellSimError):
    exit_code = 3


class NegativeRadicand(NumericalError):
    """Parameter signs make the g_qc radicand negative (usually a flipped chi sign)."""


class CouplingIsZero(NumericalError, ZeroDivisionError):
    pass


class InconsistentTimes(NumericalError):
    pass


class QuadratureNonConvergence(ConvergenceError):
    pass


class ResonantDrive(NumericalError):
    """Drive sits on the bare resonator frequency; eliminating c is degenerate."""


class NoStableBranch(ConvergenceError):
    pass


class StepTooLarge(NumericalError):
    pass


class DimensionGuard(ConfigError):
    pass


class PositivityLoss(NumericalError):
    pass


class NonUniqueSteadyState(NumericalError):
    pass


class FitUnstable(ConvergenceError):
    pass


class InsufficientDuration(ConvergenceError):
    pass


class SingularNormalMatrix(NumericalError):
    pass


class MaxIterations(ConvergenceError):
    """Iteration cap reached; the library returns the best point instead of raising."""


class TruncationWarning(UserWarning):
    pass


class ParameterWarning(UserWarning):
    pass
