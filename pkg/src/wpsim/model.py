"""Physical parameters, coefficient laws, heat-source models and pointwise PDE terms.

The pressure equation is used in the expanded form

    (1 - 2 k(theta) u) u_tt = c(theta)^2 lap(u) + b(theta) lap(u_t) + 2 k(theta) u_t^2

so the factor ``m = 1 - 2 k u`` must stay positive for the problem to remain
parabolic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ParabolicityLost

M_MIN_DEFAULT = 1e-6


@dataclass(frozen=True)
class PhysicalParams:
    rho_a: float = 1.0
    C_a: float = 1.0
    kappa_a: float = 1.0
    rho_b: float = 1.0
    C_b: float = 1.0
    W: float = 1.0
    theta_a: float = 1.0

    def __post_init__(self):
        for name in ("rho_a", "C_a", "kappa_a", "rho_b", "C_b", "theta_a"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"physical.{name}", "must be strictly positive")
        if not self.W >= 0:
            raise ConfigError("physical.W", "perfusion rate must be nonnegative")

    @property
    def heat_capacity(self) -> float:
        """rho_a * C_a"""
        return self.rho_a * self.C_a

    @property
    def perfusion(self) -> float:
        """rho_b * C_b * W"""
        return self.rho_b * self.C_b * self.W


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Scalar law ``theta -> value`` together with its derivative."""

    kind: str
    params: tuple
    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, theta):
        return self.fn(np.asarray(theta, dtype=float))

    def derivative(self, theta):
        return self.dfn(np.asarray(theta, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "affine" and self.params[1] == 0.0)

    def describe(self) -> dict:
        return {"kind": self.kind, "params": [float(p) for p in self.params]} if self.kind != "table" \
            else {"kind": "table", "theta": list(map(float, self.params[0])), "values": list(map(float, self.params[1]))}

    @classmethod
    def constant(cls, a: float) -> "Coefficient":
        a = float(a)
        return cls("constant", (a,), lambda th: np.full(np.shape(th), a), lambda th: np.zeros(np.shape(th)))

    @classmethod
    def affine(cls, a: float, b: float) -> "Coefficient":
        """``a + b * theta``"""
        a, b = float(a), float(b)
        return cls("affine", (a, b), lambda th: a + b * th, lambda th: np.full(np.shape(th), b))

    @classmethod
    def exponential(cls, a: float, b: float) -> "Coefficient":
        """``a * exp(b * theta)``"""
        a, b = float(a), float(b)
        return cls("exp", (a, b), lambda th: a * np.exp(b * th), lambda th: a * b * np.exp(b * th))

    @classmethod
    def table(cls, theta, values) -> "Coefficient":
        """Piecewise-linear interpolation (constant extrapolation) of tabulated data.

        The derivative is a central difference with step ``1e-6 * (1 + |theta|)``.
        """
        th = np.asarray(theta, dtype=float)
        vals = np.asarray(values, dtype=float)
        if th.ndim != 1 or th.shape != vals.shape or th.size < 2:
            raise ConfigError("coefficients.table", "need two equal-length columns with >= 2 rows")
        if np.any(np.diff(th) <= 0):
            raise ConfigError("coefficients.table", "theta column must be strictly increasing")

        def fn(x):
            return np.interp(x, th, vals)

        def dfn(x):
            step = 1e-6 * (1.0 + np.abs(x))
            return (fn(x + step) - fn(x - step)) / (2 * step)

        return cls("table", (tuple(th), tuple(vals)), fn, dfn)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Coefficient":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        data = np.array(rows)
        return cls.table(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class CoefficientSet:
    """Sound speed ``c``, sound diffusivity ``b`` and nonlinearity ``k`` as functions of temperature."""

    c: Coefficient = field(default_factory=lambda: Coefficient.constant(1.0))
    b: Coefficient = field(default_factory=lambda: Coefficient.constant(1.0))
    k: Coefficient = field(default_factory=lambda: Coefficient.constant(0.0))
    b0: float = 1e-8
    c0: float = 0.0

    def c2(self, theta):
        return self.c(theta) ** 2

    def dc2(self, theta):
        return 2.0 * self.c(theta) * self.c.derivative(theta)

    def check_range(self, theta_lo: float, theta_hi: float, samples: int = 257) -> None:
        """Raise ConfigError if ``b >= b0`` (or ``c^2 >= c0``) fails on ``[theta_lo, theta_hi]``."""
        pts = np.linspace(theta_lo, theta_hi, samples)
        for coef in (self.b, self.c):
            if coef.kind == "table":
                knots = np.asarray(coef.params[0])
                pts = np.union1d(pts, knots[(knots >= theta_lo) & (knots <= theta_hi)])
        bmin = float(np.min(self.b(pts)))
        if not bmin >= self.b0 or not self.b0 > 0:
            raise ConfigError(
                "coefficients.b",
                f"sound diffusivity must satisfy b(theta) >= b0 > 0 on [{theta_lo}, {theta_hi}]; "
                f"min b = {bmin:.4g}, b0 = {self.b0:.4g}",
            )
        c2min = float(np.min(self.c2(pts)))
        if self.c0 > 0 and c2min < self.c0:
            raise ConfigError(
                "coefficients.c",
                f"c(theta)^2 >= c0 > 0 required on [{theta_lo}, {theta_hi}]; min c^2 = {c2min:.4g}",
            )


SOURCE_KINDS = ("pointwise-quadratic", "time-averaged-quadratic", "zero", "custom-table")


@dataclass(frozen=True, eq=False)
class SourceModel:
    """Acoustic heat source ``Q(u_t)``.

    ``time-averaged-quadratic`` is nonlocal in time: until a frozen field has
    been attached with :meth:`freeze` it behaves like the pointwise model (the
    first pass of the two-pass scheme used by the integrator).
    """

    kind: str = "pointwise-quadratic"
    C: float = 1.0
    T_avg: float = 1.0
    table: tuple | None = None
    frozen_field: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError("source.kind", f"must be one of {SOURCE_KINDS}")
        if self.C < 0:
            raise ConfigError("source.C", "amplitude must be nonnegative")
        if self.kind == "time-averaged-quadratic" and not self.T_avg > 0:
            raise ConfigError("source.T_avg", "averaging horizon must be positive")
        if self.kind == "custom-table":
            if self.table is None:
                raise ConfigError("source.table", "custom-table source needs (v, Q) columns")
            vs, qs = (np.asarray(col, dtype=float) for col in self.table)
            if vs.ndim != 1 or vs.shape != qs.shape or np.any(np.diff(vs) <= 0):
                raise ConfigError("source.table", "need strictly increasing v column and matching Q column")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.frozen_field is not None:
            return np.broadcast_to(self.frozen_field, v.shape).copy()
        if self.kind == "zero":
            return np.zeros_like(v)
        if self.kind == "custom-table":
            return np.interp(v, *self.table)
        return self.C * v**2

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        if self.frozen_field is not None or self.kind == "zero":
            return np.zeros_like(v)
        if self.kind == "custom-table":
            step = 1e-6 * (1.0 + np.abs(v))
            return (np.interp(v + step, *self.table) - np.interp(v - step, *self.table)) / (2 * step)
        return 2.0 * self.C * v

    @property
    def q0(self) -> float:
        """``Q(0)``"""
        return float(np.interp(0.0, *self.table)) if self.kind == "custom-table" else 0.0

    @property
    def needs_second_pass(self) -> bool:
        return self.kind == "time-averaged-quadratic" and self.frozen_field is None

    def time_average(self, times: np.ndarray, v_samples: np.ndarray) -> np.ndarray:
        """``(C / T_avg) * integral_0^T_avg v^2 dt`` by the trapezoidal rule over the samples."""
        times = np.asarray(times, dtype=float)
        v_samples = np.asarray(v_samples, dtype=float)
        keep = times <= self.T_avg * (1 + 1e-12)
        return self.C / self.T_avg * np.trapezoid(v_samples[keep] ** 2, times[keep], axis=0)

    def freeze(self, field_values: np.ndarray) -> "SourceModel":
        return replace(self, frozen_field=np.asarray(field_values, dtype=float))

    def describe(self) -> dict:
        d = {"kind": self.kind, "C": self.C}
        if self.kind == "time-averaged-quadratic":
            d["T_avg"] = self.T_avg
        if self.table is not None:
            d["table"] = [list(map(float, col)) for col in self.table]
        return d


@dataclass(frozen=True, eq=False)
class Forcing:
    """Optional body forces added to the right-hand sides (manufactured solutions).

    Each callable maps ``t`` to a full nodal field.
    """

    pressure: Callable[[float], np.ndarray] | None = None
    heat: Callable[[float], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class Model:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    coeffs: CoefficientSet = field(default_factory=CoefficientSet)
    source: SourceModel = field(default_factory=SourceModel)
    forcing: Forcing | None = None
    m_min: float = M_MIN_DEFAULT


def parabolicity_factor(u, theta, coeffs: CoefficientSet) -> np.ndarray:
    """``1 - 2 k(theta) u`` at every node."""
    return 1.0 - 2.0 * coeffs.k(theta) * np.asarray(u, dtype=float)


def check_parabolicity(m: np.ndarray, m_min: float, nodes: np.ndarray | None = None) -> None:
    bad = ~(m > m_min)
    if np.any(bad):
        i = int(np.argmin(np.where(np.isnan(m), -np.inf, m)))
        raise ParabolicityLost(int(nodes[i]) if nodes is not None else i, float(m[i]))


def westervelt_accel(
    u, v, theta, lap_u, lap_v, coeffs: CoefficientSet,
    m_min: float = M_MIN_DEFAULT, forcing=None, nodes: np.ndarray | None = None,
) -> np.ndarray:
    """Pressure acceleration ``u_tt`` from the expanded Westervelt equation.

    Raises ParabolicityLost when ``1 - 2 k u <= m_min`` anywhere.  ``nodes``
    maps array positions back to grid node numbers for the error report.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    m = parabolicity_factor(u, theta, coeffs)
    check_parabolicity(m, m_min, nodes)
    rhs = coeffs.c2(theta) * lap_u + coeffs.b(theta) * lap_v + 2.0 * coeffs.k(theta) * v**2
    if forcing is not None:
        rhs = rhs + forcing
    return rhs / m


def pennes_rate(theta, v, lap_theta, params: PhysicalParams, src: SourceModel, forcing=None) -> np.ndarray:
    """Temperature rate ``theta_t`` from the bioheat equation."""
    theta = np.asarray(theta, dtype=float)
    rhs = params.kappa_a * lap_theta - params.perfusion * (theta - params.theta_a) + src(v)
    if forcing is not None:
        rhs = rhs + forcing
    return rhs / params.heat_capacity
