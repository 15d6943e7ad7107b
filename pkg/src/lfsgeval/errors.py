"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class LFSGError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ParseError(LFSGError):
    exit_code = 2

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class UnknownImageId(LFSGError):
    exit_code = 2


class UnknownLabel(LFSGError):
    exit_code = 3


class VocabularyOverflow(LFSGError):
    exit_code = 3


class InvalidDistribution(LFSGError, ValueError):
    pass


class BranchBudgetExceeded(LFSGError):
    exit_code = 4


class SearchSpaceTooLarge(LFSGError):
    exit_code = 4


class GenerationFailed(LFSGError):
    pass
