class ContractError(ValueError):
    """An operation was called outside its declared preconditions."""


class NumericError(ArithmeticError):
    """A forward or backward pass produced a non-finite value."""


class CorpusError(ValueError):
    """Malformed corpus input; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
