"""Exception types raised across the package."""

from __future__ import annotations


class DataError(ValueError):
    """Malformed or inconsistent input data. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GridMismatchError(ValueError):
    def __init__(self, message: str = "grid mismatch"):
        super().__init__(message if "grid mismatch" in message else f"grid mismatch: {message}")


class InfeasibleError(RuntimeError):
    """A model admits no feasible storage trajectory.

    The optional context fields say where the failure happened so that the
    CLI can name it: scenario labels, confidence level, MPC start step.
    """

    def __init__(
        self,
        message: str = "model infeasible",
        *,
        scenarios: list[str] | None = None,
        level: float | None = None,
        start_step: int | None = None,
    ):
        self.scenarios = list(scenarios or [])
        self.level = level
        self.start_step = start_step
        parts = [message]
        if level is not None:
            parts.append(f"infeasible at confidence level {level:g}")
        if start_step is not None:
            parts.append(f"window starting at step {start_step}")
        if self.scenarios:
            shown = ", ".join(self.scenarios[:10])
            more = f" (+{len(self.scenarios) - 10} more)" if len(self.scenarios) > 10 else ""
            parts.append(f"scenarios: {shown}{more}")
        super().__init__("; ".join(parts))
