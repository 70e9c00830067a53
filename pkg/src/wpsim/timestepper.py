"""Fully implicit Newton integrator for the coupled pressure / temperature system.

Unknowns per step are the free-node values of ``(u, v, theta)`` with
``v = u_t``.  The semi-discrete system ``y' = F(y, t)`` is advanced by backward
Euler or the trapezoidal rule; the nonlinear stage equations are solved by
Newton's method with the exact Jacobian, whose blocks are the frozen
coefficient operators of :mod:`wpsim.linear_solvers` plus the temperature and
pressure coupling terms of the linearization.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .discretization import DIRICHLET, BoundaryConditionSpec, DiscreteOperator, Grid, build_laplacian, \
    discrete_norm, outward_normal_derivative
from .errors import CoefficientRangeError, LinearSolveFailure, NewtonDivergence, NumericalFailure, \
    ParabolicityLost
from .linear_solvers import SCHEMES, implicit_weight, solve_sparse
from .model import M_MIN_DEFAULT, Model, parabolicity_factor, pennes_rate, westervelt_accel

log = logging.getLogger(__name__)


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.theta.copy(), self.t)


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 0.01
    dt_min: float | None = None
    newton_tol: float = 1e-10
    newton_max: int = 12
    scheme: str = "trapezoidal"
    startup_steps: int = 1
    m_min: float = M_MIN_DEFAULT
    max_halvings: int = 8
    output_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not self.dt > 0 or not self.newton_tol > 0 or self.newton_max < 1:
            raise ValueError("need dt > 0, newton_tol > 0, newton_max >= 1")
        if not self.effective_dt_min > 0 or self.effective_dt_min > self.dt:
            raise ValueError("need dt >= dt_min > 0")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")

    @property
    def effective_dt_min(self) -> float:
        return self.dt_min if self.dt_min is not None else self.dt / 2**self.max_halvings


@dataclass
class StepDiagnostics:
    t: float
    dt: float
    scheme: str
    iterations: int
    residuals: list[float]
    min_m: float
    halvings: int = 0


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[State] = field(default_factory=list)
    steps: list[StepDiagnostics] = field(default_factory=list)

    def record(self, s: State) -> None:
        if self.times and not s.t > self.times[-1]:
            raise ValueError("sample times must increase strictly")
        self.times.append(s.t)
        self.states.append(s.copy())

    @property
    def final(self) -> State:
        return self.states[-1]

    def newton_counts(self) -> np.ndarray:
        return np.array([d.iterations for d in self.steps])

    def series(self, grid: Grid, coeffs, theta_ref: float | np.ndarray, u_ref=0.0) -> dict[str, np.ndarray]:
        """Per-sample norms and min parabolicity factor."""
        cols: dict[str, list] = {k: [] for k in ("t", "u_L2", "u_H2", "v_L2", "theta_L2", "u_Linf", "min_m")}
        for s in self.states:
            cols["t"].append(s.t)
            cols["u_L2"].append(discrete_norm(s.u - u_ref, grid, "L2"))
            cols["u_H2"].append(discrete_norm(s.u, grid, "H2"))
            cols["v_L2"].append(discrete_norm(s.v, grid, "L2"))
            cols["theta_L2"].append(discrete_norm(s.theta - theta_ref, grid, "L2"))
            cols["u_Linf"].append(discrete_norm(s.u, grid, "Linf"))
            cols["min_m"].append(float(np.min(parabolicity_factor(s.u, s.theta, coeffs))))
        return {k: np.asarray(v) for k, v in cols.items()}

    def to_csv(self, path: str | Path, grid: Grid, coeffs, theta_ref, u_ref=0.0, fields: bool = False) -> None:
        cols = self.series(grid, coeffs, theta_ref, u_ref)
        header = list(cols)
        if fields:
            for name in ("u", "v", "theta"):
                header += [f"{name}[{i}]" for i in range(grid.size)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, s in enumerate(self.states):
                row = [repr(float(cols[k][i])) for k in cols]
                if fields:
                    row += [repr(float(x)) for x in np.concatenate([s.u, s.v, s.theta])]
                w.writerow(row)


@dataclass(frozen=True, eq=False)
class Operators:
    """Grid plus the Laplacians for pressure and temperature under their closures."""

    grid: Grid
    lap_u: DiscreteOperator
    lap_theta: DiscreteOperator

    @classmethod
    def build(cls, grid: Grid, bc: BoundaryConditionSpec) -> "Operators":
        lap_u = build_laplacian(grid, bc.j)
        lap_theta = lap_u if bc.ell == bc.j else build_laplacian(grid, bc.ell)
        return cls(grid, lap_u, lap_theta)


def _time_derivative(fn: Callable, t: float):
    h = 1e-6 * (1.0 + abs(t))
    return (np.asarray(fn(t + h), dtype=float) - np.asarray(fn(t - h), dtype=float)) / (2 * h)


class CoupledSystem:
    """Semi-discrete right-hand side and its Jacobian for one boundary setup."""

    def __init__(self, model: Model, ops: Operators, bc: BoundaryConditionSpec, s0: State, m_min: float):
        self.model = model
        self.ops = ops
        self.bc = bc
        self.m_min = m_min
        self.lu = ops.lap_u
        self.lt = ops.lap_theta
        self.nu = self.lu.n_free
        self.nt = self.lt.n_free
        # hold-initial-data defaults for Dirichlet closures
        self._u_hold = s0.u.copy()
        self._th_hold = s0.theta.copy()
        # map theta-free values onto u-free positions and v onto theta-free positions
        pos_t = np.full(ops.grid.size, -1)
        pos_t[self.lt.free] = np.arange(self.nt)
        rows = np.flatnonzero(pos_t[self.lu.free] >= 0)
        self.S_theta = sp.csr_matrix((np.ones(rows.size), (rows, pos_t[self.lu.free][rows])), shape=(self.nu, self.nt))
        pos_u = np.full(ops.grid.size, -1)
        pos_u[self.lu.free] = np.arange(self.nu)
        rows = np.flatnonzero(pos_u[self.lt.free] >= 0)
        self.S_v = sp.csr_matrix((np.ones(rows.size), (rows, pos_u[self.lt.free][rows])), shape=(self.nt, self.nu))
        w = np.concatenate([self.lu.weights, self.lu.weights, self.lt.weights])
        self.weights = w

    # boundary data -----------------------------------------------------
    def u_data(self, t):
        """(Dirichlet values or Neumann flux for u, same for v) at time t."""
        g, g_t = self.bc.g, self.bc.g_t
        if self.bc.j == DIRICHLET:
            if g is None:
                return self._u_hold, 0.0
            return g(t), (g_t(t) if g_t is not None else _time_derivative(g, t))
        if g is None:
            return 0.0, 0.0
        return g(t), (g_t(t) if g_t is not None else _time_derivative(g, t))

    def theta_data(self, t):
        h = self.bc.h
        if self.bc.ell == DIRICHLET:
            return self._th_hold if h is None else h(t)
        return 0.0 if h is None else h(t)

    # packing -----------------------------------------------------------
    def pack(self, s: State) -> np.ndarray:
        return np.concatenate([s.u[self.lu.free], s.v[self.lu.free], s.theta[self.lt.free]])

    def unpack(self, y: np.ndarray, t: float) -> State:
        nu = self.nu
        gu, gv = self.u_data(t)
        hd = self.theta_data(t)
        if self.bc.j == DIRICHLET:
            u = self.lu.embed(y[:nu], gu)
            v = self.lu.embed(y[nu:2 * nu], gv)
        else:
            u, v = y[:nu].copy(), y[nu:2 * nu].copy()
        if self.bc.ell == DIRICHLET:
            th = self.lt.embed(y[2 * nu:], hd)
        else:
            th = y[2 * nu:].copy()
        return State(u, v, th, t)

    def norm(self, r: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.weights * r**2)))

    # right-hand side ---------------------------------------------------
    def rhs(self, y: np.ndarray, t: float):
        s = self.unpack(y, t)
        gu, gv = self.u_data(t)
        flux_u, flux_v = (None, None) if self.bc.j == DIRICHLET else (gu, gv)
        flux_t = None if self.bc.ell == DIRICHLET else self.theta_data(t)
        fu, ft = self.lu.free, self.lt.free
        lap_u = self.lu.apply(s.u, flux_u)
        lap_v = self.lu.apply(s.v, flux_v)
        lap_t = self.lt.apply(s.theta, flux_t)
        forcing = self.model.forcing
        fp = forcing.pressure(t)[fu] if forcing is not None and forcing.pressure is not None else None
        fh = forcing.heat(t)[ft] if forcing is not None and forcing.heat is not None else None
        acc = westervelt_accel(s.u[fu], s.v[fu], s.theta[fu], lap_u, lap_v, self.model.coeffs,
                               self.m_min, fp, nodes=fu)
        rate = pennes_rate(s.theta[ft], s.v[ft], lap_t, self.model.params, self.model.source, fh)
        F = np.concatenate([s.v[fu], acc, rate])
        return F, (s, lap_u, lap_v, acc)

    def jacobian(self, cache) -> sp.csr_matrix:
        """Exact Jacobian ``dF/dy`` at the state held in ``cache``."""
        s, lap_u, lap_v, acc = cache
        co, par, src = self.model.coeffs, self.model.params, self.model.source
        fu, ft = self.lu.free, self.lt.free
        u, v, th = s.u[fu], s.v[fu], s.theta[fu]
        k = co.k(th)
        m = 1.0 - 2.0 * k * u
        L = self.lu.matrix
        d_uu = sp.diags(co.c2(th) / m) @ L + sp.diags(2.0 * k * acc / m)
        d_uv = sp.diags(co.b(th) / m) @ L + sp.diags(4.0 * k * v / m)
        dk = co.k.derivative(th)
        # temperature coupling: [2 c c' lap u + b' lap v + k' (u^2)_tt] / m
        d_ut = (co.dc2(th) * lap_u + co.b.derivative(th) * lap_v + 2.0 * dk * v**2 + 2.0 * dk * u * acc) / m
        d_ut = sp.diags(d_ut) @ self.S_theta
        rc = par.heat_capacity
        d_tv = sp.diags(src.derivative(s.v[ft]) / rc) @ self.S_v
        d_tt = (par.kappa_a * self.lt.matrix - par.perfusion * sp.eye(self.nt)) / rc
        Z = None
        return sp.bmat([
            [Z, sp.eye(self.nu), sp.csr_matrix((self.nu, self.nt))],
            [d_uu, d_uv, d_ut],
            [sp.csr_matrix((self.nt, self.nu)), d_tv, d_tt],
        ], format="csr")


def _solve_stage(system: CoupledSystem, s: State, dt: float, scheme: str, cfg: StepperConfig):
    """Newton solve of one implicit stage. Returns (state, iterations, residual history)."""
    a = implicit_weight(scheme)
    y0 = system.pack(s)
    t1 = s.t + dt
    explicit = np.zeros_like(y0)
    if a < 1.0:
        F0, _ = system.rhs(y0, s.t)
        explicit = (1 - a) * dt * F0
    y = y0.copy()
    history: list[float] = []
    n = y.size
    for it in range(cfg.newton_max + 1):
        F, cache = system.rhs(y, t1)
        R = y - y0 - explicit - a * dt * F
        r = system.norm(R)
        history.append(r)
        if not math.isfinite(r):
            raise NewtonDivergence(it, history)
        if r < cfg.newton_tol:
            return system.unpack(y, t1), it, history
        if it == cfg.newton_max:
            break
        J = sp.eye(n, format="csr") - a * dt * system.jacobian(cache)
        try:
            delta = solve_sparse(J, -R)
        except LinearSolveFailure:
            raise NewtonDivergence(it + 1, history)
        y = y + delta
        if np.linalg.norm(delta) <= 1e-14 * (1.0 + np.linalg.norm(y)):
            # update at round-off level: the stage system is solved to machine precision
            F, cache = system.rhs(y, t1)
            history.append(system.norm(y - y0 - explicit - a * dt * F))
            return system.unpack(y, t1), it + 1, history
    raise NewtonDivergence(cfg.newton_max, history)


def _accept(system: CoupledSystem, s: State, cfg: StepperConfig) -> float:
    co = system.model.coeffs
    m = parabolicity_factor(s.u, s.theta, co)
    min_m = float(np.min(m))
    if not min_m > cfg.m_min:
        i = int(np.argmin(m))
        raise ParabolicityLost(i, float(m[i]))
    bmin = float(np.min(co.b(s.theta)))
    if not bmin >= co.b0:
        raise CoefficientRangeError(f"b(theta) fell to {bmin:.4g} below b0 = {co.b0:.4g} at t = {s.t:.6g}")
    return min_m


def _step(system, s, dt, scheme, cfg, diags, depth=0, seen=None):
    seen = [] if seen is None else seen
    try:
        new, iters, hist = _solve_stage(system, s, dt, scheme, cfg)
        min_m = _accept(system, new, cfg)
    except (ParabolicityLost, NewtonDivergence) as exc:
        seen.append(exc)
        half = dt / 2
        if depth >= cfg.max_halvings or half < cfg.effective_dt_min * (1 - 1e-12):
            exc.t = s.t
            # near m = 0 Newton itself breaks down; report the guard if any attempt crossed it
            lost = next((e for e in seen if isinstance(e, ParabolicityLost)), None)
            if lost is not None and lost is not exc:
                lost.t = s.t
                raise lost from exc
            raise
        mid = _step(system, s, half, scheme, cfg, diags, depth + 1, seen)
        return _step(system, mid, half, scheme, cfg, diags, depth + 1, seen)
    if diags is not None:
        diags.append(StepDiagnostics(new.t, dt, scheme, iters, hist, min_m, depth))
    return new


def nonlinear_step(
    s: State,
    cfg: StepperConfig,
    model: Model,
    ops: Operators,
    bc: BoundaryConditionSpec | None = None,
    dt: float | None = None,
    scheme: str | None = None,
    system: CoupledSystem | None = None,
    diagnostics: list | None = None,
) -> State:
    """Advance ``s`` by one step of size ``dt`` (default ``cfg.dt``).

    On ParabolicityLost or NewtonDivergence the step is retried as two half
    steps, recursively, at most ``cfg.max_halvings`` times and never below
    ``dt_min``; the final failure is re-raised with ``t`` set.
    """
    if system is None:
        system = CoupledSystem(model, ops, bc or BoundaryConditionSpec(), s, cfg.m_min)
    m0 = parabolicity_factor(s.u, s.theta, model.coeffs)
    if not np.min(m0) > cfg.m_min:
        i = int(np.argmin(m0))
        raise ParabolicityLost(i, float(m0[i]), t=s.t)
    return _step(system, s, cfg.dt if dt is None else dt, scheme or cfg.scheme, cfg, diagnostics)


def _step_plan(t0: float, t_end: float, dt: float) -> list[float]:
    """Step end times ``t0 + i dt`` with a shortened final step if needed."""
    span = t_end - t0
    n = int(math.floor(span / dt + 1e-9))
    ends = [t0 + (i + 1) * dt for i in range(n)]
    if span - n * dt > 1e-9 * max(dt, span):
        ends.append(t_end)
    elif ends:
        ends[-1] = t_end
    return ends


def _run(s0, t_end, cfg, model, ops, bc, on_step=None) -> Trajectory:
    system = CoupledSystem(model, ops, bc, s0, cfg.m_min)
    traj = Trajectory()
    traj.record(s0)
    m0 = parabolicity_factor(s0.u, s0.theta, model.coeffs)
    if not np.min(m0) > cfg.m_min:
        i = int(np.argmin(m0))
        raise ParabolicityLost(i, float(m0[i]), t=s0.t)
    s = s0
    ends = _step_plan(s0.t, t_end, cfg.dt)
    for i, t1 in enumerate(ends):
        scheme = "backward-euler" if i < cfg.startup_steps else cfg.scheme
        try:
            s = _step(system, s, t1 - s.t, scheme, cfg, traj.steps)
        except NumericalFailure as exc:
            if exc.t is None:
                exc.t = s.t
            exc.trajectory = traj
            raise
        s.t = t1
        if on_step is not None:
            on_step(s)
        if (i + 1) % cfg.output_every == 0 or i == len(ends) - 1:
            traj.record(s)
    return traj


def integrate(
    s0: State,
    t_end: float,
    cfg: StepperConfig,
    model: Model,
    ops: Operators,
    bc: BoundaryConditionSpec,
    exponents: tuple[float, float, float, float] = (2.0, 2.0, 2.0, 2.0),
) -> Trajectory:
    """Integrate from ``s0`` to ``t_end``.

    Samples every ``cfg.output_every`` steps plus the final time.  A
    time-averaged heat source is handled in two passes: the first with the
    pointwise source, the second with the source frozen to the average of the
    first trajectory over ``[0, T_avg]``.
    """
    report = check_compatibility(s0, bc, ops.grid, exponents)
    if not report.ok:
        log.warning("initial data violate compatibility conditions: %s",
                    [c.name for c in report.conditions if c.status == "fail"])

    if model.source.needs_second_pass:
        times, vs = [s0.t], [s0.v.copy()]

        def collect(s):
            times.append(s.t)
            vs.append(s.v.copy())

        horizon = s0.t + model.source.T_avg
        _run(s0, horizon, cfg, model, ops, bc, on_step=collect)
        avg = model.source.time_average(np.asarray(times) - s0.t, np.asarray(vs))
        model = replace(model, source=model.source.freeze(avg))
    return _run(s0, t_end, cfg, model, ops, bc)


# compatibility -----------------------------------------------------------

@dataclass
class CompatibilityCondition:
    name: str
    required: bool
    mismatch: float
    status: str  # "pass" | "fail" | "not-required"
    rule: str

    def to_dict(self) -> dict:
        return dict(name=self.name, required=self.required, mismatch=self.mismatch, status=self.status, rule=self.rule)


@dataclass
class CompatibilityReport:
    exponents: tuple[float, float, float, float]
    conditions: list[CompatibilityCondition]

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.conditions)

    def to_dict(self) -> dict:
        p, q, r, s = self.exponents
        return {"exponents": {"p": p, "q": q, "r": r, "s": s}, "ok": self.ok,
                "conditions": [c.to_dict() for c in self.conditions]}


def _trace(field_values, grid: Grid, kind: int) -> np.ndarray:
    if kind == DIRICHLET:
        return np.asarray(field_values, dtype=float)[grid.boundary_mask]
    return outward_normal_derivative(field_values, grid)[grid.boundary_mask]


def _data_at(fn, t, grid: Grid) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(t), dtype=float), (grid.size,))[grid.boundary_mask]


def check_compatibility(
    s0: State,
    bc: BoundaryConditionSpec,
    grid: Grid,
    exponents: tuple[float, float, float, float] = (2.0, 2.0, 2.0, 2.0),
    tol: float = 1e-8,
) -> CompatibilityReport:
    """Trace compatibility of initial and boundary data at ``t = 0``.

    Conditions: ``B_j u0 = g(0)`` always; ``B_j u1 = g_t(0)`` when
    ``1 - j/2 - 1/(2q) > 1/p``; ``B_ell theta0 = h(0)`` when
    ``1 - ell/2 - 1/(2s) > 1/r``.  Mismatches are max-abs over boundary
    nodes; Neumann traces use one-sided second-order differences.
    """
    p, q, r, s = exponents
    j, ell = bc.j, bc.ell
    t0 = s0.t
    zero = np.zeros(int(grid.boundary_mask.sum()))

    if bc.g is not None:
        g0 = _data_at(bc.g, t0, grid)
        gt0 = _data_at(bc.g_t, t0, grid) if bc.g_t is not None else _data_at(lambda t: _time_derivative(bc.g, t), t0, grid)
    else:
        g0 = _trace(s0.u, grid, j) if j == DIRICHLET else zero
        gt0 = zero
    if bc.h is not None:
        h0 = _data_at(bc.h, t0, grid)
    else:
        h0 = _trace(s0.theta, grid, ell) if ell == DIRICHLET else zero

    def cond(name, required, trace, data, rule):
        mis = float(np.max(np.abs(trace - data))) if trace.size else 0.0
        status = "not-required" if not required else ("pass" if mis <= tol else "fail")
        return CompatibilityCondition(name, bool(required), mis, status, rule)

    conds = [
        cond("u0_trace", True, _trace(s0.u, grid, j), g0, "B_j u0 = g_j(0)"),
        cond("u1_trace", 1 - j / 2 - 1 / (2 * q) > 1 / p, _trace(s0.v, grid, j), gt0,
             "B_j u1 = d/dt g_j(0) if 1 - j/2 - 1/(2q) > 1/p"),
        cond("theta0_trace", 1 - ell / 2 - 1 / (2 * s) > 1 / r, _trace(s0.theta, grid, ell), h0,
             "B_ell theta0 = h_ell(0) if 1 - ell/2 - 1/(2s) > 1/r"),
    ]
    return CompatibilityReport((p, q, r, s), conds)
