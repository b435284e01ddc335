"""
stepfold.exceptions
===================

Exception and warning classes raised across stepfold.

"""


class StepfoldError(Exception):
    pass


class InvalidParameterError(StepfoldError, ValueError):
    pass


class StepOutOfRangeError(InvalidParameterError):
    pass


class DegenerateStepError(InvalidParameterError):
    pass


class InsufficientSamplesError(InvalidParameterError):
    pass


class DimensionMismatchError(StepfoldError, ValueError):
    pass


class NonFiniteLossError(StepfoldError, ArithmeticError):
    """Raised when a training loss evaluates to NaN or infinity.

    Parameters
    ----------
    step : int
        Optimizer step at which the loss was evaluated.
    t : array-like
        Step indices drawn for the offending batch.
    loss : float
        The non-finite loss value.
    """

    def __init__(self, step, t, loss):
        self.step = step
        self.t = t
        self.loss = loss
        super(NonFiniteLossError, self).__init__(
            "Non-finite loss {0} at step {1} (t={2})".format(loss, step, t)
        )


class ParseError(StepfoldError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {0}: {1}".format(line, message)
        super(ParseError, self).__init__(message)


class SchemaViolationError(StepfoldError, ValueError):
    pass


class VersionMismatchError(SchemaViolationError):
    pass


class DegenerateInterpolationWarning(UserWarning):
    pass
