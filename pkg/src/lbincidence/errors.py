"""Exception hierarchy. Each error carries the CLI exit code it maps to."""

from __future__ import annotations


class LBIncidenceError(Exception):
    exit_code = 1
    kind = "Error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class ParseError(LBIncidenceError):
    exit_code = 2
    kind = "ParseError"

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        super().__init__(message)
        self.line = line
        self.column = column

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["line"] = self.line
        d["column"] = self.column
        return d


class ValidationError(LBIncidenceError):
    exit_code = 3
    kind = "ValidationError"


class InvalidCounts(ValidationError):
    kind = "InvalidCounts"


class SupportMismatch(ValidationError):
    kind = "SupportMismatch"


class ZeroDuration(ValidationError):
    kind = "ZeroDuration"


class ZeroDenominator(ValidationError):
    kind = "ZeroDenominator"


class ZeroAgeProbability(ValidationError):
    kind = "ZeroAgeProbability"


class MissingAgeCategory(ValidationError):
    kind = "MissingAgeCategory"


class CoverageGap(ValidationError):
    kind = "CoverageGap"


class UndefinedTail(LBIncidenceError):
    """The largest observed total is censored, so the survivor tail is unidentified."""

    exit_code = 4
    kind = "UndefinedTail"

    def __init__(self, message: str, largest_censored: float | None = None,
                 policy: str = "strict"):
        super().__init__(message)
        self.largest_censored = largest_censored
        self.policy = policy

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["largest_censored"] = self.largest_censored
        d["policy"] = self.policy
        return d


class InsufficientData(LBIncidenceError):
    exit_code = 5
    kind = "InsufficientData"


class NoEvents(InsufficientData):
    kind = "NoEvents"


class TooFewEvents(InsufficientData):
    kind = "TooFewEvents"


class TooFewValidReplicates(InsufficientData):
    kind = "TooFewValidReplicates"


class ConfigInvalid(LBIncidenceError):
    exit_code = 6
    kind = "ConfigInvalid"


class PrevalenceOutOfRange(ConfigInvalid):
    kind = "PrevalenceOutOfRange"


class InfiniteMoment(ConfigInvalid):
    kind = "InfiniteMoment"
