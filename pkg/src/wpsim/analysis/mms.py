"""Method of manufactured solutions: forcing construction and convergence ladders."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..discretization import BoundaryConditionSpec, Grid, discrete_norm
from ..model import Forcing, Model
from ..timestepper import Operators, State, StepperConfig, integrate

Fn = Callable[..., np.ndarray]


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    """Closed-form fields and the derivatives the forcing needs; each is ``f(t, *coords)``.

    ``u_flux``/``theta_flux`` give the outward normal derivative on the
    boundary (needed only for Neumann closures).
    """

    u: Fn
    u_t: Fn
    u_tt: Fn
    lap_u: Fn
    lap_u_t: Fn
    theta: Fn
    theta_t: Fn
    lap_theta: Fn
    u_flux: Fn | None = None
    u_flux_t: Fn | None = None
    theta_flux: Fn | None = None
    name: str = "custom"


def sine_cosine_solution(theta_a: float, theta_amp: float = 0.1) -> ManufacturedSolution:
    """``u = sin(x) cos(t)``, ``theta = theta_a + theta_amp sin(x) exp(-t)`` on ``(0, pi)``."""
    a = theta_amp
    return ManufacturedSolution(
        u=lambda t, x: np.sin(x) * np.cos(t),
        u_t=lambda t, x: -np.sin(x) * np.sin(t),
        u_tt=lambda t, x: -np.sin(x) * np.cos(t),
        lap_u=lambda t, x: -np.sin(x) * np.cos(t),
        lap_u_t=lambda t, x: np.sin(x) * np.sin(t),
        theta=lambda t, x: theta_a + a * np.sin(x) * np.exp(-t),
        theta_t=lambda t, x: -a * np.sin(x) * np.exp(-t),
        lap_theta=lambda t, x: -a * np.sin(x) * np.exp(-t),
        name="sine-cosine",
    )


def affine_static_solution(theta_a: float, a: float = 0.2, slope: float = 0.05) -> ManufacturedSolution:
    """``u = a + slope * x`` (constant in time), ``theta = theta_a``; exact for the discrete scheme."""
    zero = lambda t, x: np.zeros_like(x)  # noqa: E731

    def flux(t, x):
        lo, hi = float(np.min(x)), float(np.max(x))
        return np.where(np.isclose(x, lo), -slope, np.where(np.isclose(x, hi), slope, 0.0))

    return ManufacturedSolution(
        u=lambda t, x: a + slope * x, u_t=zero, u_tt=zero, lap_u=zero, lap_u_t=zero,
        theta=lambda t, x: np.full_like(x, theta_a), theta_t=zero, lap_theta=zero,
        u_flux=flux, u_flux_t=zero, theta_flux=zero, name="affine-static",
    )


def manufactured_forcing(sol: ManufacturedSolution, model: Model, grid: Grid) -> Forcing:
    """Body forces that make ``sol`` an exact solution of the continuous system."""
    xs = grid.coords
    co, par, src = model.coeffs, model.params, model.source

    def pressure(t):
        u, ut, utt = sol.u(t, *xs), sol.u_t(t, *xs), sol.u_tt(t, *xs)
        th = sol.theta(t, *xs)
        u2_tt = 2.0 * u * utt + 2.0 * ut**2
        return utt - co.c2(th) * sol.lap_u(t, *xs) - co.b(th) * sol.lap_u_t(t, *xs) - co.k(th) * u2_tt

    def heat(t):
        th = sol.theta(t, *xs)
        return (par.heat_capacity * sol.theta_t(t, *xs) - par.kappa_a * sol.lap_theta(t, *xs)
                + par.perfusion * (th - par.theta_a) - src(sol.u_t(t, *xs)))

    return Forcing(pressure, heat)


def mms_problem(sol: ManufacturedSolution, model: Model, grid: Grid, j: int = 0, ell: int = 0):
    """Model with forcing, operators, boundary data and exact initial state."""
    xs = grid.coords
    if j == 0:
        g, g_t = (lambda t: sol.u(t, *xs)), (lambda t: sol.u_t(t, *xs))
    else:
        g, g_t = (lambda t: sol.u_flux(t, *xs)), (lambda t: sol.u_flux_t(t, *xs))
    h = (lambda t: sol.theta(t, *xs)) if ell == 0 else (lambda t: sol.theta_flux(t, *xs))
    bc = BoundaryConditionSpec(j, ell, g=g, g_t=g_t, h=h)
    ops = Operators.build(grid, bc)
    forced = replace(model, forcing=manufactured_forcing(sol, model, grid))
    s0 = State(sol.u(0.0, *xs), sol.u_t(0.0, *xs), sol.theta(0.0, *xs), 0.0)
    return forced, ops, bc, s0


def mms_error(sol: ManufacturedSolution, model: Model, grid: Grid, cfg: StepperConfig, t_end: float,
              j: int = 0, ell: int = 0) -> dict[str, float]:
    """Final-time discrete L2 errors of ``u``, ``v`` and ``theta``."""
    forced, ops, bc, s0 = mms_problem(sol, model, grid, j, ell)
    traj = integrate(s0, t_end, cfg, forced, ops, bc)
    s = traj.final
    xs = grid.coords
    T = s.t
    eu = discrete_norm(s.u - sol.u(T, *xs), grid)
    ev = discrete_norm(s.v - sol.u_t(T, *xs), grid)
    et = discrete_norm(s.theta - sol.theta(T, *xs), grid)
    return {"u": eu, "v": ev, "theta": et, "total": eu + ev + et}


def observed_order(steps, errors) -> float:
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


@dataclass
class ConvergenceReport:
    scheme: str
    space_nodes: list[int] = field(default_factory=list)
    space_h: list[float] = field(default_factory=list)
    space_errors: list[dict] = field(default_factory=list)
    time_dts: list[float] = field(default_factory=list)
    time_errors: list[dict] = field(default_factory=list)
    space_order: float | None = None
    time_order: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "scheme", "space_nodes", "space_h", "space_errors", "time_dts", "time_errors",
            "space_order", "time_order")}


def mms_convergence(model: Model, sol: ManufacturedSolution, bounds=((0.0, np.pi),),
                    space_nodes=(17, 33, 65, 129), space_dt: float = 2e-3,
                    time_nodes: int = 512, time_dts=(0.2, 0.1, 0.05, 0.025),
                    t_end: float = 1.0, scheme: str = "trapezoidal", newton_tol: float = 1e-11,
                    workers: int = 1, j: int = 0, ell: int = 0) -> ConvergenceReport:
    """Spatial ladder at a fixed small step and temporal ladder on a fixed fine grid.

    Orders are least-squares log-log slopes of the total final-time error.
    Runs are independent and may execute on ``workers`` threads.
    """
    base = StepperConfig(dt=space_dt, scheme=scheme, startup_steps=0, newton_tol=newton_tol,
                         output_every=10**9)
    rep = ConvergenceReport(scheme)

    def space_run(n):
        grid = Grid(tuple(bounds), tuple([n] * len(bounds)))
        return grid.spacing[0], mms_error(sol, model, grid, base, t_end, j, ell)

    fine = Grid(tuple(bounds), tuple([time_nodes] * len(bounds)))

    def time_run(dt):
        return mms_error(sol, model, fine, replace(base, dt=dt), t_end, j, ell)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        space = list(pool.map(space_run, space_nodes)) if space_nodes else []
        timed = list(pool.map(time_run, time_dts)) if time_dts else []

    rep.space_nodes = list(space_nodes)
    rep.space_h = [h for h, _ in space]
    rep.space_errors = [e for _, e in space]
    rep.time_dts = list(time_dts)
    rep.time_errors = timed
    if len(space) >= 2:
        rep.space_order = observed_order(rep.space_h, [e["total"] for e in rep.space_errors])
    if len(timed) >= 2:
        rep.time_order = observed_order(rep.time_dts, [e["total"] for e in timed])
    return rep
