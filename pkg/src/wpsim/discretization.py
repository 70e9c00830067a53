"""Tensor-product grids, second-order Laplacians and discrete norms.

Fields are flat arrays over *all* grid nodes in lexicographic (C) order:
node ``(i, j)`` of a 2D grid lives at index ``i * ny + j``.  Operators act on
their *free* nodes only: interior nodes for a Dirichlet closure, every node
for a Neumann closure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, UnsupportedDim

DIRICHLET = 0
NEUMANN = 1


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid in 1D or 2D.

    ``bounds`` holds one ``(lo, hi)`` pair per axis and ``nodes`` the node
    count per axis, boundary nodes included.
    """

    bounds: tuple[tuple[float, float], ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        nodes = tuple(int(n) for n in self.nodes)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "nodes", nodes)
        if len(bounds) not in (1, 2) or len(nodes) != len(bounds):
            raise UnsupportedDim(f"grid dimension must be 1 or 2, got {len(bounds)}")
        for (lo, hi), n in zip(bounds, nodes):
            if n < 3:
                raise ValueError("need at least 3 nodes per axis")
            if not hi > lo:
                raise ValueError(f"empty axis ({lo}, {hi})")

    @classmethod
    def uniform(cls, length: float | Sequence[float], nodes: int | Sequence[int]) -> "Grid":
        lengths = np.atleast_1d(length)
        counts = np.atleast_1d(nodes)
        if counts.size == 1 and lengths.size > 1:
            counts = np.repeat(counts, lengths.size)
        return cls(tuple((0.0, float(L)) for L in lengths), tuple(int(n) for n in counts))

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.nodes))

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.bounds[i]
        return np.linspace(lo, hi, self.nodes[i])

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays, one per axis."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return tuple(m.ravel() for m in mesh)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask.ravel()

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights over all nodes."""
        w = np.ones(1)
        for ax in range(self.dim):
            wa = np.full(self.nodes[ax], self.spacing[ax])
            wa[[0, -1]] *= 0.5
            w = np.kron(w, wa)
        return w

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.size, float(value))


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """Boundary operator selection for pressure (``j``) and temperature (``ell``).

    ``0`` is the trace (Dirichlet), ``1`` the outward normal derivative
    (Neumann).  The data callables map ``t`` to a nodal field (or scalar) whose
    boundary entries are used: prescribed values for Dirichlet, prescribed
    outward flux for Neumann.  ``g_t`` is the time derivative of ``g``.
    ``None`` data means: hold the initial boundary values (Dirichlet) or zero
    flux (Neumann).
    """

    j: int = 0
    ell: int = 0
    g: object = None
    g_t: object = None
    h: object = None

    def __post_init__(self):
        if self.j not in (0, 1) or self.ell not in (0, 1):
            raise ValueError("boundary indices j and ell must be 0 or 1")


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Discrete Laplacian on the free nodes of a grid.

    ``matrix`` maps free-node values to the stencil at free nodes.  For a
    Dirichlet closure ``coupling`` carries the boundary-node columns, so the
    affine correction is ``coupling @ field``; for Neumann the correction is
    ``flux_weights * g`` with ``g`` the outward-derivative data.
    """

    grid: Grid
    kind: int
    matrix: sp.csr_matrix
    free: np.ndarray
    coupling: sp.csr_matrix | None = None
    flux_weights: np.ndarray | None = None

    @property
    def n_free(self) -> int:
        return self.free.size

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights restricted to the free nodes."""
        return self.grid.weights[self.free]

    def correction(self, data) -> np.ndarray:
        """Affine boundary contribution at the free nodes.

        ``data`` is a full nodal field (Dirichlet: its boundary values; Neumann:
        outward flux at boundary nodes) or a scalar.
        """
        if data is None:
            return np.zeros(self.n_free)
        if self.kind == DIRICHLET:
            full = np.broadcast_to(np.asarray(data, dtype=float), (self.grid.size,))
            return self.coupling @ full
        flux = np.broadcast_to(np.asarray(data, dtype=float), (self.grid.size,))
        return self.flux_weights * flux

    def apply(self, field: np.ndarray, flux=None) -> np.ndarray:
        """Laplacian of a full nodal field at the free nodes.

        Dirichlet boundary values are read from ``field`` itself; for Neumann
        the outward flux ``flux`` (default 0) enters through the ghost nodes.
        """
        field = np.asarray(field, dtype=float)
        out = self.matrix @ field[self.free]
        if self.kind == DIRICHLET:
            out += self.coupling @ field
        elif flux is not None:
            out += self.correction(flux)
        return out

    def apply_full(self, field: np.ndarray, flux=None) -> np.ndarray:
        """As :meth:`apply` but scattered back to a full field (0 on fixed nodes)."""
        out = np.zeros(self.grid.size)
        out[self.free] = self.apply(field, flux)
        return out

    def embed(self, free_values: np.ndarray, boundary=0.0) -> np.ndarray:
        """Full nodal field from free-node values plus fixed boundary values."""
        full = np.array(np.broadcast_to(np.asarray(boundary, dtype=float), (self.grid.size,)))
        full[self.free] = free_values
        return full

    @cached_property
    def symmetric_form(self) -> sp.csr_matrix:
        """``W^(1/2) A W^(-1/2)`` with ``W`` the free-node weights.

        Both closures are self-adjoint in the weighted inner product, so this
        matrix is symmetric and shares the spectrum of ``matrix``.
        """
        s = np.sqrt(self.weights)
        return sp.csr_matrix(sp.diags(s) @ self.matrix @ sp.diags(1.0 / s))


def _axis_rows(n: int, h: float, kind: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """1D stencil rows (free rows x all nodes) and the free-node selector."""
    if kind == DIRICHLET:
        rows = sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n)) / h**2
        select = sp.eye(n - 2, n, k=1)
    else:
        main = np.full(n, -2.0)
        upper = np.ones(n - 1)
        lower = np.ones(n - 1)
        upper[0] = 2.0
        lower[-1] = 2.0
        rows = sp.diags([lower, main, upper], [-1, 0, 1]) / h**2
        select = sp.eye(n)
    return sp.csr_matrix(rows), sp.csr_matrix(select)


def build_laplacian(grid: Grid, kind: int) -> DiscreteOperator:
    """Assemble the 3-point (1D) / 5-point (2D) Laplacian.

    ``kind`` is ``0`` for Dirichlet (boundary nodes eliminated into the affine
    correction) or ``1`` for Neumann (second-order ghost-node closure).
    """
    if grid.dim not in (1, 2):
        raise UnsupportedDim(f"unsupported dimension {grid.dim}")
    if kind not in (DIRICHLET, NEUMANN):
        raise ValueError("kind must be 0 (Dirichlet) or 1 (Neumann)")

    parts = [_axis_rows(n, h, kind) for n, h in zip(grid.nodes, grid.spacing)]
    if grid.dim == 1:
        full_rows = parts[0][0]
    else:
        (rx, sx), (ry, sy) = parts
        full_rows = sp.kron(rx, sy) + sp.kron(sx, ry)
    full_rows = sp.csr_matrix(full_rows)

    if kind == DIRICHLET:
        free = np.flatnonzero(~grid.boundary_mask)
        matrix = sp.csr_matrix(full_rows[:, free])
        coupling = full_rows.tolil()
        coupling[:, free] = 0.0
        return DiscreteOperator(grid, kind, matrix, free, coupling=sp.csr_matrix(coupling))

    free = np.arange(grid.size)
    flux = np.zeros(grid.nodes)
    for ax, h in enumerate(grid.spacing):
        idx = [slice(None)] * grid.dim
        for end in (0, -1):
            idx[ax] = end
            flux[tuple(idx)] += 2.0 / h
    return DiscreteOperator(grid, kind, full_rows, free, flux_weights=flux.ravel())


def eigen_decompose(op: DiscreteOperator, count: int) -> list[tuple[float, np.ndarray]]:
    """The ``count`` smallest eigenpairs of ``-op``.

    Eigenvalues ascend; eigenvectors are returned as full nodal fields (zero on
    Dirichlet boundary nodes), normalized to unit discrete L2 norm with a
    deterministic sign (positive weighted sum, else positive first nonzero).
    """
    n = op.n_free
    count = int(count)
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in [1, {n}]")
    S = -op.symmetric_form
    S = 0.5 * (S + S.T)
    if n <= 3000:
        vals, vecs = scipy.linalg.eigh(S.toarray(), subset_by_index=[0, count - 1])
    else:
        try:
            vals, vecs = spla.eigsh(S.tocsc(), k=count, sigma=-1.0, which="LM", tol=1e-13)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    w = op.weights
    pairs = []
    for lam, s in zip(vals, vecs.T):
        y = s / np.sqrt(w)
        y /= np.sqrt(np.sum(w * y**2))
        total = np.sum(w * y)
        if abs(total) > 1e-8 * np.sum(w * np.abs(y)):
            sign = np.sign(total)
        else:
            sign = np.sign(y[np.flatnonzero(np.abs(y) > 1e-12)[0]])
        pairs.append((float(lam), op.embed(sign * y)))
    return pairs


def discrete_norm(
    field: np.ndarray,
    grid: Grid,
    which: str = "L2",
    op: DiscreteOperator | None = None,
    q: float = 2.0,
) -> float:
    """Discrete norms of a nodal field.

    ``L2``: trapezoidal-weighted; ``Linf``: max-abs; ``H2``: L2 norm of the
    discrete Laplacian over the free nodes of ``op`` (default: the interior
    stencil reading the field's own boundary values); ``Lq``: weighted
    q-sum surrogate.
    """
    field = np.asarray(field, dtype=float)
    if which == "L2":
        return float(np.sqrt(np.sum(grid.weights * field**2)))
    if which == "Linf":
        return float(np.max(np.abs(field)))
    if which == "Lq":
        return float(np.sum(grid.weights * np.abs(field) ** q) ** (1.0 / q))
    if which == "H2":
        if op is None:
            op = _interior_operator(grid)
        lap = op.apply(field)
        return float(np.sqrt(np.sum(op.weights * lap**2)))
    raise ValueError(f"unknown norm {which!r}")


_INTERIOR_CACHE: dict[Grid, DiscreteOperator] = {}


def _interior_operator(grid: Grid) -> DiscreteOperator:
    if grid not in _INTERIOR_CACHE:
        _INTERIOR_CACHE[grid] = build_laplacian(grid, DIRICHLET)
    return _INTERIOR_CACHE[grid]


def outward_normal_derivative(field: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order one-sided outward normal derivative at boundary nodes.

    Returns a full nodal array (zero at interior nodes).  At 2D corners the
    two face derivatives are averaged.
    """
    f = np.asarray(field, dtype=float).reshape(grid.nodes)
    out = np.zeros(grid.nodes)
    hits = np.zeros(grid.nodes)
    for ax, h in enumerate(grid.spacing):
        def take(k):
            idx = [slice(None)] * grid.dim
            idx[ax] = k
            return tuple(idx)

        lo = -(-3 * f[take(0)] + 4 * f[take(1)] - f[take(2)]) / (2 * h)
        hi = (3 * f[take(-1)] - 4 * f[take(-2)] + f[take(-3)]) / (2 * h)
        out[take(0)] += lo
        hits[take(0)] += 1
        out[take(-1)] += hi
        hits[take(-1)] += 1
    out[hits > 0] /= hits[hits > 0]
    return out.ravel()


def write_fields_csv(path: str | Path, grid: Grid, fields: dict[str, np.ndarray]) -> None:
    """Node coordinates followed by one column per field, lexicographic order."""
    names = ["x", "y"][: grid.dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + list(fields))
        cols = list(grid.coords) + [np.asarray(v, dtype=float) for v in fields.values()]
        for row in zip(*cols):
            writer.writerow([repr(float(x)) for x in row])


def read_fields_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return {name: data[:, i] for i, name in enumerate(header)}
