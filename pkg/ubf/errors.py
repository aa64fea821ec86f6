"""ubf.errors -- exceptions raised by the toolkit

Every exception carries an ``error_code``, which the command line front end
(:py:class:`ubf.main.Main`) returns as exit status:

===========  ===============================================================
  code        meaning
===========  ===============================================================
  1           contract violation (bad input, bad arguments)
  2           numeric failure
  3           I/O failure
===========  ===============================================================
"""


class UbfError(Exception):
    error_code = 1

    def __init__(self, message='', *args):
        if args:
            message = message % args
        super(UbfError, self).__init__(message)
        self.message = message

    def __str__(self):
        return self.message.strip()


class ContractViolation(UbfError, ValueError):
    error_code = 1


class NumericFailure(UbfError, ArithmeticError):
    error_code = 2


class SingularMatrixError(NumericFailure):
    pass


class DegenerateChannelError(NumericFailure):
    pass


class TrainingAborted(NumericFailure):
    '''Training hit a non-finite loss or gradient

    ``params`` holds the parameter values at the time of failure; for unrolled
    models these are the step sizes.
    '''

    def __init__(self, message, params=None):
        super(TrainingAborted, self).__init__(message)
        self.params = params


class SearchFailed(NumericFailure):
    '''No hyperparameter trial completed; ``history`` holds all records'''

    def __init__(self, message, history):
        super(SearchFailed, self).__init__(message)
        self.history = history


class DatasetIOError(UbfError, IOError):
    error_code = 3


class DatasetFormatError(DatasetIOError):
    pass


class TruncatedDatasetError(DatasetFormatError):
    pass


class ExperimentError(UbfError):
    '''A benchmark cell failed; wraps the cause with its coordinates'''

    def __init__(self, method, train_size, seed, cause):
        super(ExperimentError, self).__init__(
            "%s (method=%s, train_size=%s, seed=%s)", cause, method, train_size, seed)
        self.method = method
        self.train_size = train_size
        self.seed = seed
        self.cause = cause
        self.error_code = getattr(cause, 'error_code', 1)


def require(condition, message, *args):
    """raise :py:class:`ContractViolation` unless condition holds"""
    if not condition:
        raise ContractViolation(message, *args)
