"""Growth rates of the system linearized at an equilibrium."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..discretization import eigen_decompose
from ..linear_solvers import oscillator_roots
from ..model import Model
from ..timestepper import CoupledSystem, Operators, StepperConfig
from .equilibrium import EquilibriumResult

NEUTRAL_TOL = 1e-10


@dataclass
class Spectrum:
    lambdas_u: np.ndarray
    lambdas_theta: np.ndarray
    wave_rates: np.ndarray  # shape (modes, 2), complex
    heat_rates: np.ndarray
    method: str = "modes"
    all_rates: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def rates(self) -> np.ndarray:
        if self.all_rates.size:
            return self.all_rates
        return np.concatenate([self.wave_rates.ravel(), self.heat_rates.astype(complex)])

    @property
    def omega0(self) -> float:
        """Predicted decay rate: minus the largest real part."""
        return float(-np.max(self.rates().real))

    @property
    def omega0_normal(self) -> float:
        """As ``omega0`` but ignoring neutral (zero) rates, e.g. the constant-pressure family."""
        rates = self.rates()
        keep = np.abs(rates) > NEUTRAL_TOL
        return float(-np.max(rates[keep].real)) if np.any(keep) else float("nan")

    def to_dict(self) -> dict:
        def cpx(z):
            return [float(z.real), float(z.imag)]
        return {
            "method": self.method,
            "omega0": self.omega0,
            "omega0_normal": self.omega0_normal,
            "lambdas_u": self.lambdas_u.tolist(),
            "lambdas_theta": self.lambdas_theta.tolist(),
            "wave_rates": [[cpx(a), cpx(b)] for a, b in self.wave_rates],
            "heat_rates": self.heat_rates.tolist(),
        }


def linearized_spectrum(eq: EquilibriumResult, model: Model, ops: Operators, modes: int = 5,
                        method: str = "modes") -> Spectrum:
    """Per-mode growth rates at the equilibrium.

    ``method="modes"`` (uniform equilibrium temperature): for each Laplacian
    eigenvalue ``lam_k`` the wave block contributes the roots of
    ``m* mu^2 + b lam mu + c^2 lam = 0`` (``m* = 1 - 2 k r``) and the heat
    block ``-(kappa lam + rho_b C_b W) / (rho_a C_a)``.  The linearization is
    block lower-triangular (temperature never feeds back on pressure at an
    equilibrium), so these are exactly its eigenvalues.

    ``method="jacobian"`` computes the full spectrum of the discrete Jacobian
    densely instead; use it for non-uniform equilibria or as a cross-check.
    """
    par, co = model.params, model.coeffs
    if method == "jacobian":
        return _jacobian_spectrum(eq, model, ops)
    if not eq.theta_uniform:
        raise ValueError("non-uniform equilibrium temperature; use method='jacobian'")
    th = float(eq.theta_star[0])
    u_star = float(eq.u_star[0])
    mass = float(1.0 - 2.0 * co.k(th) * u_star)
    lam_u = np.array([lam for lam, _ in eigen_decompose(ops.lap_u, modes)])
    lam_t = np.array([lam for lam, _ in eigen_decompose(ops.lap_theta, modes)])
    # the Neumann kernel comes back as +-1e-14; snap it so its rates are exactly neutral
    lam_u[np.abs(lam_u) < NEUTRAL_TOL] = 0.0
    lam_t[np.abs(lam_t) < NEUTRAL_TOL] = 0.0
    b, c2 = float(co.b(th)), float(co.c2(th))
    wave = np.array([oscillator_roots(lam, b, c2, mass) for lam in lam_u], dtype=complex)
    heat = -(par.kappa_a * lam_t + par.perfusion) / par.heat_capacity
    return Spectrum(lam_u, lam_t, wave, heat, "modes")


def _jacobian_spectrum(eq: EquilibriumResult, model: Model, ops: Operators) -> Spectrum:
    from ..discretization import BoundaryConditionSpec

    bc = BoundaryConditionSpec(ops.lap_u.kind, ops.lap_theta.kind)
    s = eq.state()
    system = CoupledSystem(model, ops, bc, s, StepperConfig().m_min)
    _, cache = system.rhs(system.pack(s), 0.0)
    J = system.jacobian(cache).toarray()
    rates = scipy.linalg.eigvals(J)
    rates = rates[np.argsort(-rates.real)]
    return Spectrum(np.zeros(0), np.zeros(0), np.zeros((0, 2), complex), np.zeros(0), "jacobian", rates)
