"""
Exception hierarchy for capfem.

Every failure that a caller may need to act on carries the data it needs
(element index, line number, step index, key path) as attributes, not only
in the message.
"""
from typing import Optional, Sequence


class CapfemError(Exception):
    """Base class for all capfem errors."""


class GeometryError(CapfemError, ValueError):
    """Invalid geometry parameters (precondition violation)."""


class MeshQualityError(CapfemError):
    """An element fell below the minimum-angle threshold or degenerated."""

    def __init__(self, element: int, angle: float, threshold: float):
        self.element = element
        self.angle = angle
        self.threshold = threshold
        super().__init__(
            f"Element {element} has minimum angle {angle:.2f} deg "
            f"(threshold {threshold:.2f} deg)"
        )


class SnappingError(CapfemError):
    """The interface could not be fitted into the background grid."""

    def __init__(self, message: str, iterations: int = 0, suggestion: str = ""):
        self.iterations = iterations
        self.suggestion = suggestion
        text = message if not suggestion else f"{message}; {suggestion}"
        super().__init__(text)


class InterfaceResolutionError(CapfemError):
    """The mesh has no interface edges, so it does not resolve the interface."""


class MeshFormatError(CapfemError):
    """Malformed or inconsistent mesh file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DegenerateElementError(CapfemError):
    """An element has zero or negative signed area."""

    def __init__(self, element: Optional[int], area: float):
        self.element = element
        self.area = area
        name = "Triangle" if element is None else f"Element {element}"
        super().__init__(f"{name} is degenerate (signed area {area:.3e})")


class FunctionEvaluationError(CapfemError):
    """A user-supplied function failed or returned non-finite values."""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        self.point = None if point is None else tuple(float(c) for c in point)
        suffix = f" at point {self.point}" if self.point is not None else ""
        super().__init__(f"{message}{suffix}")


class SolverError(CapfemError):
    """Base class for linear solver failures."""


class ConvergenceError(SolverError):
    """Iterative solver hit its iteration limit."""

    def __init__(self, iterations: int, residual_history, best_iterate):
        self.iterations = iterations
        self.residual_history = list(residual_history)
        self.best_iterate = best_iterate
        last = self.residual_history[-1] if self.residual_history else float("nan")
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {last:.3e})"
        )


class BreakdownError(SolverError):
    """NaN or non-positive curvature encountered; the matrix is not SPD."""

    def __init__(self, iteration: int, detail: str):
        self.iteration = iteration
        super().__init__(f"CG breakdown at iteration {iteration}: {detail}")


class SingularMatrixError(SolverError):
    """Dense factorization found a singular or numerically singular matrix."""


class TimeRangeError(CapfemError, ValueError):
    """Forcing evaluated outside [0, T]."""

    def __init__(self, t: float, final_time: float):
        self.t = t
        self.final_time = final_time
        super().__init__(f"Time {t!r} outside [0, {final_time!r}]")


class StepFailure(CapfemError):
    """A time step failed; the partial trajectory is kept for diagnosis."""

    def __init__(self, step: int, cause: Exception, partial=None):
        self.step = step
        self.cause = cause
        self.partial = partial
        super().__init__(f"Step {step} failed: {cause}")


class ConfigError(CapfemError):
    """Invalid run configuration, reported with its dotted key path."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class CaseGateError(CapfemError):
    """A manufactured case failed its jump-condition or strong-form gate."""

    def __init__(self, case: str, check: str, violation: float, tolerance: float):
        self.case = case
        self.check = check
        self.violation = violation
        self.tolerance = tolerance
        super().__init__(
            f"Case {case} failed {check} check: violation {violation:.3e} "
            f"exceeds {tolerance:.1e}"
        )
