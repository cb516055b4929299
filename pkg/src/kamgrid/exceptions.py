"""Exception types shared across the solvers."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Invalid problem, solver or CLI configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConvergenceError(RuntimeError):
    """An iteration exhausted its budget before meeting its tolerance.

    ``residual`` is the last residual reached and ``best`` the best iterate
    available at the time of failure (solver specific, may be ``None``).
    """

    def __init__(self, message: str, residual: float = float("nan"), best=None):
        self.residual = residual
        self.best = best
        super().__init__(f"{message} (residual={residual:.3e})")


class UnsupportedReferenceError(ValueError):
    """No analytic reference value exists for the given Lagrangian."""
