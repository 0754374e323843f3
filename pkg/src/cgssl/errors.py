class CgsslError(Exception):
    """Base class for errors raised by cgssl."""


class NotPositiveDefiniteError(CgsslError, ValueError):
    pass


class NumericalError(CgsslError, ArithmeticError):
    """A solver produced non-finite values or could not make progress."""


class LineSearchError(NumericalError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
