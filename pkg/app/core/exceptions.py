from typing import Optional


class SmcStockError(Exception):
    """
    * root of every error raised by the package
    """


class InvalidArgumentError(SmcStockError, ValueError):
    """
    * bad shapes, out-of-range parameters, malformed inputs
    """


class IngestError(InvalidArgumentError):
    """
    * csv ingest failure, carries file and line diagnostics
    """

    def __init__(self, message: str, path: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")


class NumericFailureError(SmcStockError, ArithmeticError):
    """
    * non-convergence or non-finite values during an iterative computation
    """

    def __init__(
        self,
        message: str,
        iteration: Optional[int] = None,
        last_value: Optional[float] = None,
    ):
        self.iteration = iteration
        self.last_value = last_value
        details = []
        if iteration is not None:
            details.append(f"iteration={iteration}")
        if last_value is not None:
            details.append(f"last_finite={last_value:.6g}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class ReportIOError(SmcStockError, OSError):
    """
    * output directory or report file could not be written
    """


class StageError(SmcStockError):
    """
    * a pipeline stage aborted; the original exception is kept as cause
    """

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.cause, NumericFailureError)
