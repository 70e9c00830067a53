"""Bisection for the largest initial amplitude that integrates to ``t_end``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import BracketInvalid, NewtonDivergence, ParabolicityLost
from ..model import CoefficientSet, Model
from ..timestepper import Operators, State, StepperConfig, integrate


@dataclass
class DataShape:
    """Unit-amplitude initial perturbation; a run at amplitude ``A`` starts from ``base + A * shape``."""

    u0: np.ndarray
    u1: np.ndarray
    theta0: np.ndarray
    theta_base: np.ndarray
    u_base: np.ndarray | None = None

    def state(self, amplitude: float) -> State:
        u_base = 0.0 if self.u_base is None else self.u_base
        return State(u_base + amplitude * self.u0, amplitude * self.u1,
                     self.theta_base + amplitude * self.theta0, 0.0)


@dataclass
class Attempt:
    amplitude: float
    ok: bool
    failure: str | None = None
    t_fail: float | None = None

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "ok": self.ok, "failure": self.failure, "t_fail": self.t_fail}


@dataclass
class SweepReport:
    t_end: float
    threshold: float | None
    bracket: tuple[float, float] | None
    failure_mode: str | None
    attempts: list[Attempt] = field(default_factory=list)
    status: str = "threshold"

    @property
    def relative_width(self) -> float | None:
        if self.bracket is None:
            return None
        lo, hi = self.bracket
        return (hi - lo) / hi

    def monotonicity_violations(self) -> list[tuple[float, float]]:
        """Pairs (failed A, succeeded A' > A) among the tested amplitudes."""
        fails = [a.amplitude for a in self.attempts if not a.ok]
        oks = [a.amplitude for a in self.attempts if a.ok]
        return [(f, o) for f in fails for o in oks if o > f]

    def to_dict(self) -> dict:
        return {
            "t_end": self.t_end, "status": self.status, "threshold": self.threshold,
            "bracket": list(self.bracket) if self.bracket else None,
            "relative_width": self.relative_width, "failure_mode": self.failure_mode,
            "monotonicity_violations": [list(p) for p in self.monotonicity_violations()],
            "attempts": [a.to_dict() for a in self.attempts],
        }


def run_succeeds(model: Model, ops: Operators, bc, cfg: StepperConfig, s0: State, t_end: float) -> Attempt:
    try:
        integrate(s0, t_end, cfg, model, ops, bc)
    except (ParabolicityLost, NewtonDivergence) as exc:
        return Attempt(float("nan"), False, type(exc).__name__, exc.t)
    return Attempt(float("nan"), True)


def smallness_sweep(model: Model, ops: Operators, bc, shape: DataShape, cfg: StepperConfig, t_end: float,
                    a_lo: float, a_hi: float, rel_width: float = 0.01, max_iter: int = 60,
                    predicate: Callable[[float], Attempt] | None = None) -> SweepReport:
    """Bisect ``[a_lo, a_hi]`` on "integration reaches t_end without ParabolicityLost/NewtonDivergence".

    Returns the largest succeeding amplitude with a bracket of relative width
    below ``rel_width``.  If ``a_hi`` also succeeds the report says no finite
    threshold was detected; if ``a_lo`` fails, BracketInvalid is raised.
    """
    if not 0 <= a_lo < a_hi:
        raise ValueError("need 0 <= a_lo < a_hi")

    def attempt(a):
        res = predicate(a) if predicate is not None else run_succeeds(model, ops, bc, cfg, shape.state(a), t_end)
        res.amplitude = float(a)
        attempts.append(res)
        return res

    attempts: list[Attempt] = []
    lo_res = attempt(a_lo)
    hi_res = attempt(a_hi)
    if not lo_res.ok and not hi_res.ok:
        raise BracketInvalid(f"both endpoints fail ({lo_res.failure}, {hi_res.failure})")
    if lo_res.ok and hi_res.ok:
        return SweepReport(t_end, None, None, None, attempts, status="no finite threshold detected")
    if not lo_res.ok:
        raise BracketInvalid("lower amplitude fails while upper succeeds")
    lo, hi, fail = a_lo, a_hi, hi_res
    for _ in range(max_iter):
        if (hi - lo) / hi < rel_width:
            break
        mid = 0.5 * (lo + hi)
        res = attempt(mid)
        if res.ok:
            lo = mid
        else:
            hi, fail = mid, res
    return SweepReport(t_end, lo, (lo, hi), fail.failure, attempts)


def static_critical_amplitude(u_shape: np.ndarray, theta: np.ndarray, coeffs: CoefficientSet,
                              u_base: float | np.ndarray = 0.0) -> float:
    """Smallest ``A`` with ``min(1 - 2 k(theta) (u_base + A u_shape)) = 0`` (inf if none)."""
    k = coeffs.k(theta)
    slope = 2.0 * k * u_shape
    offset = 1.0 - 2.0 * k * u_base
    pos = slope > 0
    if not np.any(pos):
        return float("inf")
    return float(np.min(offset[pos] / slope[pos]))
