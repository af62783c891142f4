"""Exception hierarchy shared by all rrgff modules."""


class RRGFFError(Exception):
    """Base class; ``stage`` is filled in by the pipeline when re-raised."""

    stage = None

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class InvalidParameters(RRGFFError, ValueError):
    pass


class InvalidConfig(RRGFFError, ValueError):
    pass


class GenerationFailed(RRGFFError, RuntimeError):
    def __init__(self, msg, attempts=None):
        super().__init__(msg)
        self.attempts = attempts


class SingularOperator(RRGFFError, ArithmeticError):
    pass


class DegenerateOperator(RRGFFError, ArithmeticError):
    pass


class OperatorQuality(RRGFFError, ArithmeticError):
    pass


class SizeLimit(RRGFFError, MemoryError):
    pass


def tag(exc, stage):
    """Attach a pipeline stage name to ``exc`` and return it."""
    if isinstance(exc, RRGFFError) and exc.stage is None:
        exc.stage = stage
    return exc
