"""Probe of instantaneous smoothing in time.

Finite-difference surrogates of higher time derivatives are measured right
after the initial time and at a later time ``tau`` for a ladder of step
sizes.  For rough data the early surrogates blow up as ``dt -> 0`` while the
late ones stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..discretization import discrete_norm
from ..model import Model
from ..timestepper import Operators, State, StepperConfig, integrate

ORDERS = (1, 2, 3)
_STENCILS = {1: [-1, 1], 2: [1, -2, 1], 3: [-1, 3, -3, 1]}


def difference_surrogate(samples: list[np.ndarray], start: int, order: int, dt: float, grid) -> float:
    """L2 norm of the forward difference of the given order at ``samples[start]``, divided by ``dt**order``."""
    diff = sum(c * samples[start + i] for i, c in enumerate(_STENCILS[order]))
    return discrete_norm(diff, grid, "L2") / dt**order


def growth_exponent(dts, values) -> float:
    """``-d log(value) / d log(dt)``: positive when the surrogate grows as dt shrinks."""
    slope, _ = np.polyfit(np.log(dts), np.log(values), 1)
    return float(-slope)


@dataclass
class SmoothingReport:
    field_name: str
    tau: float
    dts: list[float]
    early: dict[int, list[float]]
    late: dict[int, list[float]]
    exponents_early: dict[int, float] = field(default_factory=dict)
    exponents_late: dict[int, float] = field(default_factory=dict)

    def confirmed(self, order: int = 3, late_max: float = 0.2, early_min: float = 0.5) -> bool:
        return self.exponents_late[order] < late_max and self.exponents_early[order] > early_min

    def to_dict(self) -> dict:
        return {
            "field": self.field_name, "tau": self.tau, "dts": self.dts,
            "early": {str(k): v for k, v in self.early.items()},
            "late": {str(k): v for k, v in self.late.items()},
            "exponents_early": {str(k): v for k, v in self.exponents_early.items()},
            "exponents_late": {str(k): v for k, v in self.exponents_late.items()},
            "confirmed_order3": self.confirmed(3) if 3 in self.exponents_early else None,
        }


def smoothing_probe(model: Model, ops: Operators, bc, s0: State, cfg: StepperConfig,
                    dts, tau: float = 0.1, field_name: str = "u", orders=ORDERS) -> SmoothingReport:
    """Run the ladder ``dts`` and measure difference surrogates at ``t0`` and ``t0 + tau``.

    Each run records every step; ``tau`` must be a multiple of every ``dt``.
    """
    early = {k: [] for k in orders}
    late = {k: [] for k in orders}
    dts = [float(d) for d in dts]
    top = max(orders)
    for dt in dts:
        n_tau = int(round(tau / dt))
        if abs(n_tau * dt - tau) > 1e-9 * tau:
            raise ValueError(f"tau = {tau} is not a multiple of dt = {dt}")
        run_cfg = replace(cfg, dt=dt, output_every=1, dt_min=None)
        traj = integrate(s0, s0.t + (n_tau + top) * dt, run_cfg, model, ops, bc)
        samples = [getattr(s, field_name) for s in traj.states]
        for k in orders:
            early[k].append(difference_surrogate(samples, 0, k, dt, ops.grid))
            late[k].append(difference_surrogate(samples, n_tau, k, dt, ops.grid))
    rep = SmoothingReport(field_name, tau, dts, early, late)
    for k in orders:
        rep.exponents_early[k] = growth_exponent(dts, early[k])
        rep.exponents_late[k] = growth_exponent(dts, late[k])
    return rep


def hat(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Piecewise-linear hat on ``[lo, hi]`` peaking at 1 in the middle."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return np.clip(1.0 - np.abs(x - mid) / half, 0.0, None)
