"""Frozen-coefficient linear problems: heat and linearized strongly damped wave.

These are the building blocks the Newton iteration of the coupled stepper
inverts at every step; they are also usable as standalone steppers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DIRICHLET, DiscreteOperator
from .errors import LinearSolveFailure
from .model import PhysicalParams

SOLVER_RTOL = 1e-10
DIRECT_LIMIT = 20_000

SCHEMES = ("backward-euler", "trapezoidal")


def implicit_weight(scheme: str) -> float:
    if scheme == "backward-euler":
        return 1.0
    if scheme == "trapezoidal":
        return 0.5
    raise ValueError(f"unknown time scheme {scheme!r}; expected one of {SCHEMES}")


def solve_sparse(A, rhs: np.ndarray, rtol: float = SOLVER_RTOL) -> np.ndarray:
    """Solve ``A x = rhs``: sparse LU below DIRECT_LIMIT unknowns, ILU-preconditioned GMRES above."""
    A = sp.csc_matrix(A)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    if A.shape[0] < DIRECT_LIMIT:
        x = spla.spsolve(A, rhs)
    else:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, _ = spla.gmres(A, rhs, M=M, rtol=rtol * 0.1, restart=100, maxiter=50)
    res = np.linalg.norm(A @ x - rhs) / bnorm
    if not np.isfinite(res) or res > rtol:
        raise LinearSolveFailure(res)
    return x


@dataclass(frozen=True, eq=False)
class FrozenCoefficients:
    """Nodal fields ``a1`` (damping, ``a1 >= alpha > 0``) and ``a2`` (stiffness) of the linear wave problem."""

    a1: np.ndarray
    a2: np.ndarray
    alpha: float = 1e-12

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=float)
        if not self.alpha > 0 or not np.min(a1) >= self.alpha:
            raise ValueError(f"a1 must satisfy a1 >= alpha > 0 (min a1 = {np.min(a1):.4g})")


def _free(field, op: DiscreteOperator) -> np.ndarray:
    arr = np.asarray(field, dtype=float)
    if arr.ndim == 0:
        return np.full(op.n_free, float(arr))
    return arr[op.free] if arr.size == op.grid.size else arr


def heat_step(
    theta: np.ndarray,
    dt: float,
    params: PhysicalParams,
    op: DiscreteOperator,
    f1,
    scheme: str = "backward-euler",
    boundary_new=None,
    flux=None,
) -> np.ndarray:
    """One implicit step of ``rho_a C_a theta_t - kappa_a lap(theta) + rho_b C_b W theta = f1``.

    ``theta`` is a full nodal field.  Dirichlet values at the new time come
    from ``boundary_new`` (default: those of ``theta``); Neumann flux is
    ``flux`` (default 0) at both time levels.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = implicit_weight(scheme)
    rc, p, kap = params.heat_capacity, params.perfusion, params.kappa_a
    f = _free(f1, op)

    new_bdry = theta if boundary_new is None else boundary_new
    template = op.embed(np.zeros(op.n_free), new_bdry) if op.kind == DIRICHLET else None

    lhs = (rc / dt + a * p) * sp.eye(op.n_free) - a * kap * op.matrix
    rhs = (rc / dt - (1 - a) * p) * theta[op.free] + (1 - a) * kap * op.apply(theta, flux) + f
    if op.kind == DIRICHLET:
        rhs += a * kap * op.correction(template)
    else:
        rhs += a * kap * op.correction(flux)
    x = solve_sparse(lhs, rhs)
    if op.kind == DIRICHLET:
        return op.embed(x, template)
    return x


def linwest_step(
    u: np.ndarray,
    v: np.ndarray,
    dt: float,
    fro: FrozenCoefficients,
    op: DiscreteOperator,
    f2,
    scheme: str = "backward-euler",
    u_boundary_new=None,
    v_boundary_new=None,
    flux=None,
    flux_t=None,
) -> tuple[np.ndarray, np.ndarray]:
    """One implicit step of ``u_tt - a1 lap(u_t) - a2 lap(u) = f2`` in first-order form.

    Solves for ``(u_new, v_new)`` simultaneously as one sparse block system:

        u_new - a dt v_new                           = u + (1-a) dt v
        v_new - a dt (a1 lap v_new + a2 lap u_new)   = v + (1-a) dt (a1 lap v + a2 lap u) + dt f2

    with ``a = 1`` (backward Euler) or ``1/2`` (trapezoidal).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = implicit_weight(scheme)
    n = op.n_free
    a1 = _free(fro.a1, op)
    a2 = _free(fro.a2, op)
    f = _free(f2, op)

    ub = u if u_boundary_new is None else u_boundary_new
    vb = v if v_boundary_new is None else v_boundary_new
    if op.kind == DIRICHLET:
        corr_u = op.correction(op.embed(np.zeros(n), ub))
        corr_v = op.correction(op.embed(np.zeros(n), vb))
    else:
        corr_u = op.correction(flux)
        corr_v = op.correction(flux_t)

    L = op.matrix
    I = sp.eye(n)
    J = sp.bmat([
        [I, -a * dt * I],
        [-a * dt * sp.diags(a2) @ L, I - a * dt * sp.diags(a1) @ L],
    ], format="csc")

    lap_u = op.apply(u, flux)
    lap_v = op.apply(v, flux_t)
    rhs_u = u[op.free] + (1 - a) * dt * v[op.free]
    rhs_v = (v[op.free] + (1 - a) * dt * (a1 * lap_v + a2 * lap_u) + dt * f
             + a * dt * (a1 * corr_v + a2 * corr_u))
    x = solve_sparse(J, np.concatenate([rhs_u, rhs_v]))
    if op.kind == DIRICHLET:
        return op.embed(x[:n], ub), op.embed(x[n:], vb)
    return x[:n], x[n:]


def oscillator_roots(lam: float, a1: float, a2: float, mass: float = 1.0) -> tuple[complex, complex]:
    """Roots of ``mass mu^2 + a1 lam mu + a2 lam = 0`` (one damped-wave mode)."""
    disc = complex((a1 * lam) ** 2 - 4 * mass * a2 * lam)
    sq = np.sqrt(disc)
    return (-a1 * lam + sq) / (2 * mass), (-a1 * lam - sq) / (2 * mass)


def oscillator_mode_amplitudes(
    lam: float, a1: float, a2: float, dt: float, schemes, u0: float, v0: float
) -> np.ndarray:
    """Per-mode amplitudes ``(u_n, v_n)`` of the discrete damped-oscillator recurrence.

    Uses the eigen-decomposition of the mode's 2x2 system via the quadratic
    formula: each continuous root ``mu`` is advanced by the scheme's
    amplification factor ``(1 + (1-a) mu dt) / (1 - a mu dt)``.  ``schemes``
    lists the scheme of every step.  Returns an array of shape (n+1, 2).
    """
    mu1, mu2 = oscillator_roots(lam, a1, a2)
    if abs(mu1 - mu2) < 1e-10 * (1 + abs(mu1)):
        raise ValueError("repeated root; perturb the coefficients")
    # (u, v) = c1 (1, mu1) + c2 (1, mu2)
    c2 = (v0 - mu1 * u0) / (mu2 - mu1)
    c1 = u0 - c2
    out = [(u0, v0)]
    for scheme in schemes:
        a = implicit_weight(scheme)
        c1 *= (1 + (1 - a) * mu1 * dt) / (1 - a * mu1 * dt)
        c2 *= (1 + (1 - a) * mu2 * dt) / (1 - a * mu2 * dt)
        out.append(((c1 + c2).real, (c1 * mu1 + c2 * mu2).real))
    return np.array(out)


def heat_mode_amplitudes(rate: float, dt: float, schemes, amp0: float) -> np.ndarray:
    """Scalar recurrence for a heat mode ``y' = rate * y`` under the given per-step schemes."""
    out = [amp0]
    y = amp0
    for scheme in schemes:
        a = implicit_weight(scheme)
        y *= (1 + (1 - a) * rate * dt) / (1 - a * rate * dt)
        out.append(y)
    return np.array(out)
