"""Exception types shared across the package.

The CLI maps these onto exit codes, so each class carries the category it
belongs to rather than leaving callers to sniff messages.
"""


class MbchError(Exception):
    exit_code = 1


class DimensionError(MbchError, ValueError):
    """Operands with incompatible shapes."""


class SequenceTooShortError(DimensionError):
    pass


class BatchTooSmallError(MbchError, ValueError):
    pass


class LabelError(MbchError, ValueError):
    pass


class ContractError(MbchError, ValueError):
    pass


class EvaluationError(MbchError, ArithmeticError):
    pass


class EmptyInputError(MbchError, ValueError):
    pass


class DivergenceError(MbchError, ArithmeticError):
    exit_code = 1

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class ParseError(MbchError, ValueError):
    exit_code = 3

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class StratificationError(MbchError, ValueError):
    pass


class ConfigError(MbchError, ValueError):
    exit_code = 4

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))


class UsageError(MbchError, ValueError):
    exit_code = 4


class MissingInputError(MbchError, FileNotFoundError):
    exit_code = 2
