"""Steady states of the coupled system with homogeneous pressure data and ambient temperature data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..discretization import DIRICHLET
from ..errors import SingularSteadyProblem
from ..linear_solvers import solve_sparse
from ..model import Model, pennes_rate
from ..timestepper import Operators, State


@dataclass
class EquilibriumResult:
    u_star: np.ndarray
    theta_star: np.ndarray
    residual_u: float
    residual_theta: float
    j: int
    ell: int
    r: float | None = None

    def state(self, t: float = 0.0) -> State:
        return State(self.u_star.copy(), np.zeros_like(self.u_star), self.theta_star.copy(), t)

    @property
    def theta_uniform(self) -> bool:
        th = self.theta_star
        return bool(np.ptp(th) <= 1e-12 * (1.0 + np.max(np.abs(th))))

    def to_dict(self) -> dict:
        return {
            "j": self.j, "ell": self.ell, "r": self.r,
            "u_star": {"min": float(np.min(self.u_star)), "max": float(np.max(self.u_star))},
            "theta_star": {"min": float(np.min(self.theta_star)), "max": float(np.max(self.theta_star))},
            "residual_u": self.residual_u, "residual_theta": self.residual_theta,
        }


def steady_residuals(u, theta, model: Model, ops: Operators) -> tuple[float, float]:
    """Discrete L2 norms of the steady pressure and heat residuals (Neumann data zero)."""
    lu, lt = ops.lap_u, ops.lap_theta
    co = model.coeffs
    res_u = co.c2(theta[lu.free]) * lu.apply(u)
    zero_v = np.zeros(lt.n_free)
    res_t = model.params.heat_capacity * pennes_rate(theta[lt.free], zero_v, lt.apply(theta), model.params, model.source)
    return (float(np.sqrt(np.sum(lu.weights * res_u**2))),
            float(np.sqrt(np.sum(lt.weights * res_t**2))))


def compute_equilibrium(model: Model, ops: Operators, r: float | None = None) -> EquilibriumResult:
    """Equilibrium for pressure data 0 and temperature data ``(1 - ell) theta_a``.

    Pressure: ``u* = 0`` under Dirichlet closure, ``u* = r`` (default 0) under
    Neumann.  Temperature solves ``-kappa lap theta + rho_b C_b W (theta - theta_a) = Q(0)``.
    """
    par = model.params
    lu, lt = ops.lap_u, ops.lap_theta
    grid = ops.grid
    j, ell = lu.kind, lt.kind
    if j == DIRICHLET:
        u_star = grid.zeros()
        r = None
    else:
        r = 0.0 if r is None else float(r)
        u_star = grid.full(r)

    if ell != DIRICHLET and par.perfusion == 0.0:
        raise SingularSteadyProblem("W = 0 with Neumann temperature closure: steady heat operator is singular")
    A = par.perfusion * sp.eye(lt.n_free) - par.kappa_a * lt.matrix
    rhs = np.full(lt.n_free, model.source.q0 + par.perfusion * par.theta_a)
    if ell == DIRICHLET:
        boundary = grid.full(par.theta_a)
        rhs += par.kappa_a * lt.correction(boundary)
        theta_star = lt.embed(solve_sparse(A, rhs), boundary)
    else:
        theta_star = solve_sparse(A, rhs)
    res_u, res_t = steady_residuals(u_star, theta_star, model, ops)
    return EquilibriumResult(u_star, theta_star, res_u, res_t, j, ell, r)
