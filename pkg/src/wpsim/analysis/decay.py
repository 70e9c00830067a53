"""Exponential decay-rate fitting against the linearized prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..discretization import discrete_norm, eigen_decompose
from ..errors import NonDecayingSignal
from ..model import Model
from ..timestepper import Operators, State, StepperConfig, Trajectory, integrate
from .equilibrium import EquilibriumResult
from .spectrum import Spectrum, linearized_spectrum

DEFAULT_NORMS = ("L2", "H2")


@dataclass
class DecayFit:
    omega: float
    C: float
    window: tuple[float, float]
    r2: float
    n_samples: int
    omega_pred: float | None = None

    @property
    def relative_error(self) -> float | None:
        if self.omega_pred is None:
            return None
        return abs(self.omega - self.omega_pred) / abs(self.omega_pred)

    def to_dict(self) -> dict:
        return {"omega": self.omega, "C": self.C, "window": list(self.window), "r2": self.r2,
                "n_samples": self.n_samples, "omega_pred": self.omega_pred,
                "relative_error": self.relative_error}


def fit_exponential(times, values, skip: float = 0.2) -> DecayFit:
    """Least-squares fit of ``log(values) = log(C) - omega t`` after dropping the first ``skip`` fraction."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = int(np.floor(skip * times.size))
    t, y = times[start:], values[start:]
    if t.size < 10:
        raise ValueError(f"need >= 10 samples past the transient window, got {t.size}")
    if np.any(y <= 0):
        raise ValueError("signal must be positive to fit an exponential")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    pred = intercept + slope * t
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if slope >= 0 and r2 > 0.9:
        raise NonDecayingSignal(float(slope), r2)
    return DecayFit(float(-slope), float(np.exp(intercept)), (float(t[0]), float(t[-1])), r2, int(t.size))


def decay_signal(traj: Trajectory, eq: EquilibriumResult, ops: Operators,
                 norms: tuple[str, ...] = DEFAULT_NORMS) -> tuple[np.ndarray, np.ndarray]:
    """``|u - u*| + |v| + |theta - theta*|`` per sample.

    The pressure deviation is measured in every norm of ``norms`` (summed);
    ``v`` and the temperature deviation in L2.
    """
    grid = ops.grid
    vals = []
    for s in traj.states:
        du = s.u - eq.u_star
        total = 0.0
        for name in norms:
            total += discrete_norm(du, grid, name, op=ops.lap_u if name == "H2" else None)
        total += discrete_norm(s.v, grid, "L2") + discrete_norm(s.theta - eq.theta_star, grid, "L2")
        vals.append(total)
    return np.asarray(traj.times), np.asarray(vals)


def fit_decay(traj: Trajectory, eq: EquilibriumResult, ops: Operators,
              norms: tuple[str, ...] = DEFAULT_NORMS, skip: float = 0.2,
              spectrum: Spectrum | None = None) -> DecayFit:
    times, vals = decay_signal(traj, eq, ops, norms)
    fit = fit_exponential(times, vals, skip)
    if spectrum is not None:
        fit.omega_pred = spectrum.omega0
    return fit


def slow_mode_data(eq: EquilibriumResult, model: Model, ops: Operators, amplitude: float,
                   theta_amplitude: float = 0.0) -> State:
    """Perturbation of the equilibrium along the slowest first-mode pressure eigenvector.

    ``u0 = u* + A phi1``, ``u1 = mu_slow A phi1`` (``mu_slow`` the root of the
    first mode's characteristic polynomial with the larger real part) and
    ``theta0 = theta* + A_theta phi1_theta``.
    """
    lin = linearized_spectrum(eq, model, ops, modes=1)
    mu = lin.wave_rates[0]
    mu_slow = mu[np.argmax(mu.real)]
    if abs(mu_slow.imag) > 0:
        mu_slow = mu_slow.real  # oscillatory first mode: start from rest along the real part
    phi = eigen_decompose(ops.lap_u, 1)[0][1]
    phi_t = eigen_decompose(ops.lap_theta, 1)[0][1]
    return State(eq.u_star + amplitude * phi, float(np.real(mu_slow)) * amplitude * phi,
                 eq.theta_star + theta_amplitude * phi_t, 0.0)


def decay_experiment(model: Model, ops: Operators, bc, cfg: StepperConfig, amplitude: float,
                     t_end: float, theta_amplitude: float = 0.0, norms=DEFAULT_NORMS,
                     skip: float = 0.2, modes: int = 5):
    """Integrate from a slow-mode perturbation of the equilibrium and fit the decay rate."""
    from .equilibrium import compute_equilibrium

    eq = compute_equilibrium(model, ops)
    lin = linearized_spectrum(eq, model, ops, modes)
    s0 = slow_mode_data(eq, model, ops, amplitude, theta_amplitude)
    traj = integrate(s0, t_end, cfg, model, ops, bc)
    fit = fit_decay(traj, eq, ops, norms, skip, lin)
    return fit, lin, traj
