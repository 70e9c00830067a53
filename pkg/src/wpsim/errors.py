"""Exception types raised by the simulator and the experiment harness."""

from __future__ import annotations


class WPSimError(Exception):
    """Base class for all wpsim errors."""


class NumericalFailure(WPSimError):
    """A run failed for numerical reasons; ``t`` is filled in by the integrator."""

    t: float | None = None

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "t": self.t}


class ParabolicityLost(NumericalFailure):
    def __init__(self, node: int, m_value: float, t: float | None = None):
        self.node = int(node)
        self.m_value = float(m_value)
        self.t = t
        super().__init__(f"parabolicity factor {self.m_value:.3e} at node {self.node}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(node=self.node, m_value=self.m_value)
        return d


class NewtonDivergence(NumericalFailure):
    def __init__(self, iterations: int, residuals: list[float], t: float | None = None):
        self.iterations = iterations
        self.residuals = list(residuals)
        self.t = t
        last = self.residuals[-1] if self.residuals else float("nan")
        super().__init__(f"Newton failed after {iterations} iterations (residual {last:.3e})")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(iterations=self.iterations, residuals=self.residuals)
        return d


class LinearSolveFailure(NumericalFailure):
    def __init__(self, residual: float):
        self.residual = float(residual)
        super().__init__(f"linear solve did not reach tolerance (relative residual {residual:.3e})")


class ConvergenceFailure(NumericalFailure):
    """Iterative eigensolver stalled."""


class CoefficientRangeError(NumericalFailure):
    """A coefficient left its admissible range (e.g. b(theta) < b0) during a run."""


class SingularSteadyProblem(NumericalFailure):
    """The steady heat operator has a kernel (W = 0 with Neumann temperature data)."""


class NonDecayingSignal(NumericalFailure):
    def __init__(self, slope: float, r2: float):
        self.slope = slope
        self.r2 = r2
        super().__init__(f"fitted log-slope {slope:.4g} is nonnegative (R^2 = {r2:.4f})")


class BracketInvalid(WPSimError):
    pass


class UnsupportedDim(WPSimError):
    pass


class ConfigError(WPSimError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")
