"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(Exception):
    """A configuration value or file is invalid.

    Carries enough context (path / key / line) for the CLI to print a parse
    diagnostic that points at the offending entry.
    """

    def __init__(self, message: str, *, path=None, key: str | None = None,
                 line: int | None = None):
        self.path = path
        self.key = key
        self.line = line
        super().__init__(message)

    def __str__(self) -> str:
        msg = super().__str__()
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.key is not None:
            where.append(f"key '{self.key}'")
        if where:
            return f"{': '.join([', '.join(where), msg])}"
        return msg


class CompilationError(Exception):
    """A storage plan cannot be realised as a legal hardware timeline.

    ``violations`` lists every violated constraint, not just the first.
    """

    def __init__(self, violations):
        self.violations = tuple(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"plan is infeasible: {lines}")


class ModeSetMismatch(Exception):
    """Two count tables do not cover the same spatio-temporal modes."""

    def __init__(self, missing_in_signal, missing_in_noise):
        self.missing_in_signal = tuple(sorted(missing_in_signal))
        self.missing_in_noise = tuple(sorted(missing_in_noise))
        parts = []
        if self.missing_in_signal:
            parts.append(f"missing in signal run: {list(self.missing_in_signal)}")
        if self.missing_in_noise:
            parts.append(f"missing in noise run: {list(self.missing_in_noise)}")
        super().__init__("mode sets differ: " + "; ".join(parts))
