"""Run configuration: YAML parsing, validation and problem assembly."""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .discretization import BoundaryConditionSpec, Grid, eigen_decompose
from .errors import ConfigError, UnsupportedDim
from .expressions import Expression, field_derivative, field_function
from .model import Coefficient, CoefficientSet, Model, PhysicalParams, SourceModel
from .timestepper import Operators, State, StepperConfig

EXPERIMENTS = ("simulate", "equilibrium", "spectrum", "decay", "smoothing", "sweep", "mms", "check")
# experiments whose meaning rests on the well-posedness / stability hypotheses
_DYNAMIC = ("simulate", "decay", "smoothing", "sweep", "mms")

DEFAULTS: dict[str, Any] = {
    "experiment": "simulate",
    "seed": 0,
    "grid": {"bounds": [[0.0, math.pi]], "nodes": [65]},
    "physical": {"rho_a": 1.0, "C_a": 1.0, "kappa_a": 1.0, "rho_b": 1.0, "C_b": 1.0, "W": 1.0, "theta_a": 1.0},
    "coefficients": {
        "c": {"kind": "constant", "a": 1.0},
        "b": {"kind": "constant", "a": 1.0},
        "k": {"kind": "constant", "a": 0.0},
        "b0": 1e-8,
        "c0": 0.0,
        "theta_range": None,
    },
    "source": {"kind": "pointwise-quadratic", "C": 1.0, "T_avg": 1.0},
    "boundary": {"j": 0, "ell": 0, "g": None, "h": None},
    "initial": {"u0": "0", "u1": "0", "theta0": "theta_a"},
    "stepper": {"dt": 0.01, "dt_min": None, "newton_tol": 1e-10, "newton_max": 12, "scheme": "trapezoidal",
                "startup_steps": 1, "m_min": 1e-6, "max_halvings": 8, "output_every": 1},
    "t_end": 1.0,
    "exponents": {"p": 2.0, "q": 2.0, "r": 2.0, "s": 2.0},
    "experiments": {
        "equilibrium": {"r": None},
        "spectrum": {"modes": 5},
        "decay": {"amplitudes": [1e-2, 1e-3], "t_end": 30.0, "modes": 1, "skip": 0.2,
                  "theta_amplitude": 0.0, "norms": ["L2", "H2"]},
        "smoothing": {"dts": [0.01, 0.005, 0.0025, 0.00125], "tau": 0.1, "field": "u"},
        "sweep": {"a_lo": 0.0, "a_hi": 10.0, "t_end": [1.0, 2.0, 4.0], "rel_width": 0.01},
        "mms": {"space_nodes": [17, 33, 65, 129], "space_dt": 2e-3, "time_nodes": 512,
                "time_dts": [0.2, 0.1, 0.05, 0.025], "t_end": 1.0, "schemes": ["trapezoidal", "backward-euler"]},
    },
    "output": {"dir": "wpsim-out", "fields": False},
}


# sections whose keys are fixed; the others accept kind-specific entries
_STRICT = ("", "physical.", "stepper.", "exponents.", "boundary.", "output.")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if path in _STRICT and key not in base:
            raise ConfigError(where, "unknown key")
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = val
    return out


def _number(value, key: str, positive: bool = False, nonneg: bool = False) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(key, "must be finite")
    if positive and not x > 0:
        raise ConfigError(key, "must be strictly positive")
    if nonneg and not x >= 0:
        raise ConfigError(key, "must be nonnegative")
    return x


def coefficient_from_entry(entry, key: str, base_dir: Path) -> Coefficient:
    if isinstance(entry, (int, float)):
        return Coefficient.constant(float(entry))
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError(key, "expected a number or a mapping with 'kind'")
    kind = entry["kind"]
    if kind == "constant":
        return Coefficient.constant(_number(entry.get("a", entry.get("value")), f"{key}.a"))
    if kind == "affine":
        return Coefficient.affine(_number(entry.get("a"), f"{key}.a"), _number(entry.get("b"), f"{key}.b"))
    if kind == "exp":
        return Coefficient.exponential(_number(entry.get("a"), f"{key}.a"), _number(entry.get("b"), f"{key}.b"))
    if kind == "table":
        if "path" in entry:
            path = Path(entry["path"])
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"{key}.path", f"table file {path} not found")
            return Coefficient.from_csv(path)
        return Coefficient.table(entry.get("theta"), entry.get("values"))
    raise ConfigError(f"{key}.kind", f"unknown coefficient kind {kind!r}; expected constant, affine, exp or table")


@dataclass
class Problem:
    grid: Grid
    model: Model
    ops: Operators
    bc: BoundaryConditionSpec
    s0: State


@dataclass
class RunConfig:
    raw: dict
    experiment: str
    seed: int
    grid: Grid
    model: Model
    j: int
    ell: int
    g_expr: Expression | None
    h_expr: Expression | None
    initial: dict
    stepper: StepperConfig
    t_end: float
    exponents: tuple[float, float, float, float]
    params: dict
    out_dir: Path
    fields: bool
    warnings: list[str] = field(default_factory=list)

    def boundary(self) -> BoundaryConditionSpec:
        xs = self.grid.coords
        g = g_t = h = None
        if self.g_expr is not None:
            g, g_t = field_function(self.g_expr, xs), field_derivative(self.g_expr, xs)
        if self.h_expr is not None:
            h = field_function(self.h_expr, xs)
        return BoundaryConditionSpec(self.j, self.ell, g=g, g_t=g_t, h=h)

    def build(self) -> Problem:
        bc = self.boundary()
        ops = Operators.build(self.grid, bc)
        rng = np.random.default_rng(self.seed)
        u0 = self._initial_field("u0", ops, rng, ops.lap_u)
        u1 = self._initial_field("u1", ops, rng, ops.lap_u)
        th0 = self._initial_field("theta0", ops, rng, ops.lap_theta)
        return Problem(self.grid, self.model, ops, bc, State(u0, u1, th0, 0.0))

    def _initial_field(self, name: str, ops: Operators, rng, op) -> np.ndarray:
        entry = self.initial[name]
        key = f"initial.{name}"
        consts = {"theta_a": self.model.params.theta_a}
        base = self.model.params.theta_a if name == "theta0" else 0.0
        if isinstance(entry, (int, float, str)):
            expr = Expression(str(entry), consts, key)
            return np.real(expr(0.0, *self.grid.coords)).astype(float)
        if not isinstance(entry, dict):
            raise ConfigError(key, "expected an expression or a mapping")
        amp = _number(entry.get("amplitude", 1.0), f"{key}.amplitude")
        if "mode" in entry:
            k = int(entry["mode"])
            if k < 1:
                raise ConfigError(f"{key}.mode", "mode index starts at 1")
            phi = eigen_decompose(op, k)[k - 1][1]
            return base + amp * phi
        if "random" in entry:
            n = int(entry["random"])
            pairs = eigen_decompose(op, n)
            coef = rng.standard_normal(n) / np.arange(1, n + 1) ** 2
            shape = sum(c * phi for c, (_, phi) in zip(coef, pairs))
            norm = math.sqrt(float(np.sum(self.grid.weights * shape**2)))
            return base + amp * shape / norm
        raise ConfigError(key, "mapping must contain 'mode' or 'random'")


def exponent_warnings(exponents: tuple[float, float, float, float], d: int, j: int, ell: int) -> list[str]:
    """Messages for violated exponent constraints ``d/q < 2``, ``2/r + d/s < 2`` and the excluded cases."""
    p, q, r, s = exponents
    notes = []
    if not d / q < 2:
        notes.append(f"exponents.q: constraint d/q < 2 violated (d={d}, q={q})")
    if not 2 / r + d / s < 2:
        notes.append(f"exponents.r,s: constraint 2/r + d/s < 2 violated (d={d}, r={r}, s={s})")
    if math.isclose(1 - j / 2 - 1 / (2 * q), 1 / p):
        notes.append("exponents.p,q: excluded case 1 - j/2 - 1/(2q) = 1/p")
    if math.isclose(1 - ell / 2 - 1 / (2 * s), 1 / r):
        notes.append("exponents.r,s: excluded case 1 - ell/2 - 1/(2s) = 1/r")
    return notes


def _validate_exponents(exps: dict, d: int, j: int, ell: int, experiment: str) -> tuple[tuple, list[str]]:
    vals = tuple(_number(exps[k], f"exponents.{k}") for k in ("p", "q", "r", "s"))
    for name, val in zip("pqrs", vals):
        if not 1 < val < math.inf:
            raise ConfigError(f"exponents.{name}", "must lie in (1, inf)")
    notes = exponent_warnings(vals, d, j, ell) if experiment in _DYNAMIC + ("check",) else []
    return vals, notes


def parse_config(path: str | Path | None = None, overrides: dict | None = None,
                 experiment: str | None = None) -> RunConfig:
    """Read, merge with defaults and validate a YAML run configuration.

    Cross-field checks: ``b(theta) >= b0 > 0`` (and ``c^2 >= c0``) over the
    declared temperature range, guard and step constraints, ``Q(0) = 0`` for
    dynamic experiments, and the exponent constraints (violations warn).
    """
    data: dict = {}
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("config", f"file {path} not found")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
        base_dir = path.parent
    raw = _merge(DEFAULTS, data)
    if overrides:
        raw = _merge(raw, overrides)

    exp = experiment or raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    raw["experiment"] = exp

    g = raw["grid"]
    try:
        if "length" in g and "bounds" not in data.get("grid", {}):
            lengths = np.atleast_1d(g["length"]).astype(float)
            bounds = [[0.0, float(L)] for L in lengths]
        else:
            bounds = g["bounds"]
        nodes = list(np.atleast_1d(g["nodes"]).astype(int))
        if len(nodes) == 1 and len(bounds) > 1:
            nodes = nodes * len(bounds)
        grid = Grid(tuple(tuple(b) for b in bounds), tuple(nodes))
    except UnsupportedDim as exc:
        raise ConfigError("grid", str(exc)) from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError("grid", f"invalid grid specification: {exc}") from None

    ph = raw["physical"]
    params = PhysicalParams(**{k: _number(ph[k], f"physical.{k}") for k in DEFAULTS["physical"]})

    co = raw["coefficients"]
    coeffs = CoefficientSet(
        c=coefficient_from_entry(co["c"], "coefficients.c", base_dir),
        b=coefficient_from_entry(co["b"], "coefficients.b", base_dir),
        k=coefficient_from_entry(co["k"], "coefficients.k", base_dir),
        b0=_number(co["b0"], "coefficients.b0", positive=True),
        c0=_number(co["c0"], "coefficients.c0", nonneg=True),
    )

    src = raw["source"]
    table = src.get("table")
    if table is not None:
        table = (tuple(map(float, table["v"])), tuple(map(float, table["Q"])))
    source = SourceModel(kind=src["kind"], C=_number(src.get("C", 1.0), "source.C", nonneg=True),
                         T_avg=_number(src.get("T_avg", 1.0), "source.T_avg", positive=True), table=table)
    if exp in _DYNAMIC + ("check",) and source.q0 != 0.0:
        raise ConfigError("source.table", "the heat source must vanish at zero (Q(0) = 0)")

    bd = raw["boundary"]
    j, ell = int(bd["j"]), int(bd["ell"])
    if j not in (0, 1) or ell not in (0, 1):
        raise ConfigError("boundary", "j and ell must be 0 (Dirichlet) or 1 (Neumann)")
    consts = {"theta_a": params.theta_a}
    g_expr = Expression(str(bd["g"]), consts, "boundary.g") if bd.get("g") is not None else None
    h_expr = Expression(str(bd["h"]), consts, "boundary.h") if bd.get("h") is not None else None

    st = raw["stepper"]
    try:
        stepper = StepperConfig(
            dt=_number(st["dt"], "stepper.dt", positive=True),
            dt_min=None if st.get("dt_min") is None else _number(st["dt_min"], "stepper.dt_min", positive=True),
            newton_tol=_number(st["newton_tol"], "stepper.newton_tol", positive=True),
            newton_max=int(st["newton_max"]),
            scheme=str(st["scheme"]),
            startup_steps=int(st["startup_steps"]),
            m_min=_number(st["m_min"], "stepper.m_min", positive=True),
            max_halvings=int(st["max_halvings"]),
            output_every=int(st["output_every"]),
        )
    except ValueError as exc:
        raise ConfigError("stepper", str(exc)) from None
    if stepper.m_min >= 1.0:
        raise ConfigError("stepper.m_min", "guard must lie in (0, 1)")

    t_end = _number(raw["t_end"], "t_end", positive=True)
    exponents, notes = _validate_exponents(raw["exponents"], grid.dim, j, ell, exp)

    model = Model(params, coeffs, source)
    cfg = RunConfig(raw=raw, experiment=exp, seed=int(raw["seed"]), grid=grid, model=model, j=j, ell=ell,
                    g_expr=g_expr, h_expr=h_expr, initial=raw["initial"], stepper=stepper, t_end=t_end,
                    exponents=exponents, params=raw["experiments"].get(exp, {}) or {},
                    out_dir=Path(raw["output"]["dir"]), fields=bool(raw["output"]["fields"]), warnings=notes)

    # temperature range for the coefficient hypotheses: declared, else theta_a and the initial data
    rng_decl = co.get("theta_range")
    if rng_decl is not None:
        lo, hi = (_number(v, "coefficients.theta_range") for v in rng_decl)
        if hi < lo:
            raise ConfigError("coefficients.theta_range", "expected [low, high]")
    else:
        th0 = cfg.build().s0.theta
        lo = min(params.theta_a, float(np.min(th0)))
        hi = max(params.theta_a, float(np.max(th0)))
    coeffs.check_range(lo, hi)
    cfg.raw["coefficients"]["theta_range"] = [lo, hi]

    for note in notes:
        warnings.warn(note, stacklevel=2)
    return cfg
