from __future__ import annotations

from typing import Any, Optional


class UserFacingError(RuntimeError):
    # a runtime error that is safe to show to the user.
    pass


class DomainError(UserFacingError, ValueError):
    # an argument lies outside the mathematical domain of an operation.
    pass


class ConfigError(UserFacingError):
    def __init__(self, errors: list[str], path: Optional[str] = None, key: Optional[str] = None):
        self.errors = list(errors)
        self.path = path
        self.key = key
        where = f"{path}: " if path else ""
        super().__init__(where + "; ".join(self.errors))


class SolverError(UserFacingError):
    pass


class DivergenceError(SolverError):
    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class VerificationError(UserFacingError):
    def __init__(self, failures: list[str]):
        self.failures = list(failures)
        super().__init__("verification failed: " + "; ".join(self.failures))
