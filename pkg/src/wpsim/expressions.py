"""Tiny arithmetic grammar for boundary and initial data.

Allowed: numbers, the variables ``t``, ``x``, ``y``, named constants passed
by the caller (e.g. ``theta_a``), ``pi``, ``e``, the operators ``+ - * / **``
and the functions ``sin``, ``cos``, ``exp``.  Expressions are checked against
this whitelist before being compiled to a numpy callable.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import ConfigError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("t", "x", "y")

_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class Expression:
    """Compiled expression ``f(t, x, y)``; ``derivative_t`` uses the complex step (exact for this grammar)."""

    def __init__(self, source: str, constants: dict[str, float] | None = None, key: str = "expression"):
        self.source = str(source)
        self.key = key
        consts = dict(CONSTANTS)
        consts.update(constants or {})
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(key, f"cannot parse {self.source!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ConfigError(key, f"unsupported syntax {type(node).__name__} in {self.source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or len(node.args) != 1 \
                        or node.keywords:
                    raise ConfigError(key, f"only sin/cos/exp of one argument are allowed in {self.source!r}")
            if isinstance(node, ast.Name) and node.id not in FUNCTIONS and node.id not in VARIABLES \
                    and node.id not in consts:
                raise ConfigError(key, f"unknown name {node.id!r} in {self.source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ConfigError(key, f"only numeric literals are allowed in {self.source!r}")
        self._code = compile(tree, f"<{key}>", "eval")
        self._env = {"__builtins__": {}, **FUNCTIONS, **consts}
        self.uses_time = any(isinstance(n, ast.Name) and n.id == "t" for n in ast.walk(tree))

    def __call__(self, t, x, y=None):
        x = np.asarray(x)
        env = dict(self._env, t=t, x=x, y=np.zeros_like(x) if y is None else y)
        val = eval(self._code, env)  # whitelisted AST only
        return np.broadcast_to(val, x.shape) + np.zeros(x.shape, dtype=np.result_type(val, float))

    def derivative_t(self, t, x, y=None, h: float = 1e-20):
        if not self.uses_time:
            return np.zeros(np.shape(x))
        return np.imag(self(t + 1j * h, x, y)) / h

    def __repr__(self):
        return f"Expression({self.source!r})"


def field_function(expr: Expression, coords: tuple[np.ndarray, ...]) -> Callable[[float], np.ndarray]:
    """``t -> expr(t, *coords)`` as a nodal field."""
    return lambda t: np.real(expr(t, *coords))


def field_derivative(expr: Expression, coords: tuple[np.ndarray, ...]) -> Callable[[float], np.ndarray]:
    return lambda t: expr.derivative_t(t, *coords)
