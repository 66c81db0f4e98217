"""Exception hierarchy shared by every muac module."""

from __future__ import annotations


class MuacError(Exception):
    """Base class for all muac errors."""


class InvalidName(MuacError, ValueError):
    pass


class NotOwned(MuacError):
    def __init__(self, giver: str, resource: str):
        super().__init__(f"{giver} does not own {resource}")
        self.giver = giver
        self.resource = resource


class InfeasibleAt(MuacError):
    """Replaying a computation failed; ``index`` is the first bad step (0-based)."""

    def __init__(self, index: int, cause: NotOwned):
        super().__init__(f"step {index} is infeasible: {cause}")
        self.index = index
        self.cause = cause


# -- policy language ---------------------------------------------------------


class PolicyError(MuacError):
    """Any error raised while reading a policy; always carries a location."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        loc = f"{line}:{col}: " if line else ""
        super().__init__(loc + message)
        self.message = message
        self.line = line
        self.col = col

    def to_json(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "line": self.line,
            "col": self.col,
        }


class PolicySyntaxError(PolicyError):
    def __init__(self, expected: str, found: str, line: int, col: int):
        super().__init__(f"expected {expected}, found {found}", line, col)
        self.expected = expected
        self.found = found

    def to_json(self) -> dict:
        out = super().to_json()
        out["expected"] = self.expected
        return out


class HeadNotMe(PolicyError):
    pass


class ResourceVariable(PolicyError):
    pass


class UnboundVariable(MuacError):
    def __init__(self, variable: str):
        super().__init__(f"unbound variable {variable!r}")
        self.variable = variable


# -- solver -------------------------------------------------------------------


class Unsolved(MuacError):
    """The solver produced no certificate."""

    reason = "unsolved"


class NoSolution(Unsolved):
    reason = "no_solution"


class BudgetExceeded(Unsolved):
    """The step bound cut off branches that were still open."""

    reason = "budget_exceeded"


# -- ledger -------------------------------------------------------------------


class LedgerError(MuacError):
    pass


class NotInWallet(LedgerError):
    pass


class NotFactOwner(LedgerError):
    pass


class CorruptLog(LedgerError):
    def __init__(self, seq: int, detail: str = ""):
        super().__init__(f"log corrupt at seq {seq}" + (f": {detail}" if detail else ""))
        self.seq = seq
