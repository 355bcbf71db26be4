class RefineError(Exception):
    """Base class for all errors raised by threadrefine."""


class ParseError(RefineError, ValueError):
    def __init__(self, message, line=None, col=None, expected=None):
        self.line = line
        self.col = col
        self.expected = expected
        where = ""
        if line is not None:
            where = f"{line}:{col}: " if col is not None else f"line {line}: "
        super().__init__(where + message)


class ThreadSyntaxError(ParseError):
    pass


class DuplicateLocal(ParseError):
    pass


class UnknownIdentifier(ParseError):
    pass


class TraceSyntaxError(ParseError):
    pass


class ValueOnSync(TraceSyntaxError):
    pass


class MissingValueOnMem(TraceSyntaxError):
    pass


class NotWellFormed(RefineError):
    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)


class InitMismatch(RefineError):
    pass


class BudgetExceeded(RefineError):
    pass


class PreconditionViolated(RefineError):
    pass


class NotApplicable(RefineError):
    pass
