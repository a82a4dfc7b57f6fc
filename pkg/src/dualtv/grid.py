"""Discrete calculus on a uniform pixel mesh.

Cell fields are piecewise constants (one value per pixel) and edge fields
are lowest-order Raviart-Thomas fields carrying one normal-component value
per interior edge. Boundary edges are not stored; they are zero by
construction, which is the ``p . n = 0`` condition on the image boundary.

Array layout: a cell field on an ``m1 x m2`` grid is an array of shape
``(m1, m2)`` indexed ``[i, j]`` with ``i`` along x1 and ``j`` along x2.
Vertical edges (normal +x1) have shape ``(m1 - 1, m2)``; horizontal edges
(normal +x2) have shape ``(m1, m2 - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised when fields defined on different meshes are combined."""


@dataclass(frozen=True)
class GridGeometry:
    m1: int
    m2: int
    h: float = 1.0

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError(f"grid needs at least one cell, got {self.m1}x{self.m2}")
        if not self.h > 0:
            raise ValueError(f"mesh size must be positive, got {self.h}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)

    @property
    def x_shape(self) -> tuple[int, int]:
        return (self.m1 - 1, self.m2)

    @property
    def y_shape(self) -> tuple[int, int]:
        return (self.m1, self.m2 - 1)

    @property
    def area(self) -> float:
        return self.m1 * self.m2 * self.h**2

    @property
    def n_cells(self) -> int:
        return self.m1 * self.m2

    @property
    def n_edges(self) -> int:
        return (self.m1 - 1) * self.m2 + self.m1 * (self.m2 - 1)

    @property
    def n_x_edges(self) -> int:
        return (self.m1 - 1) * self.m2


def _check_same(a: GridGeometry, b: GridGeometry) -> None:
    if a != b:
        raise GeometryError(f"geometry mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class CellField:
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geometry.shape:
            raise GeometryError(f"cell values have shape {values.shape}, expected {self.geometry.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "CellField":
        return cls(geometry, np.zeros(geometry.shape))

    @classmethod
    def constant(cls, geometry: GridGeometry, value: float) -> "CellField":
        return cls(geometry, np.full(geometry.shape, float(value)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other: "CellField") -> "CellField":
        _check_same(self.geometry, other.geometry)
        return CellField(self.geometry, self.values + other.values)

    def __sub__(self, other: "CellField") -> "CellField":
        _check_same(self.geometry, other.geometry)
        return CellField(self.geometry, self.values - other.values)

    def __mul__(self, scalar: float) -> "CellField":
        return CellField(self.geometry, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class EdgeField:
    """Edge degrees of freedom, stored as one flat vector.

    The flat layout is the row-major vertical-edge block followed by the
    row-major horizontal-edge block; ``x`` and ``y`` are reshaped views.
    """

    geometry: GridGeometry
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float).reshape(-1)
        if data.size != self.geometry.n_edges:
            raise GeometryError(f"edge field has {data.size} DOFs, expected {self.geometry.n_edges}")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "EdgeField":
        return cls(geometry, np.zeros(geometry.n_edges))

    @classmethod
    def from_components(cls, geometry: GridGeometry, x: np.ndarray, y: np.ndarray) -> "EdgeField":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != geometry.x_shape or y.shape != geometry.y_shape:
            raise GeometryError(
                f"edge components {x.shape}, {y.shape} do not match {geometry.x_shape}, {geometry.y_shape}"
            )
        return cls(geometry, np.concatenate([x.ravel(), y.ravel()]))

    @property
    def x(self) -> np.ndarray:
        g = self.geometry
        return self.data[: g.n_x_edges].reshape(g.x_shape)

    @property
    def y(self) -> np.ndarray:
        g = self.geometry
        return self.data[g.n_x_edges :].reshape(g.y_shape)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __add__(self, other: "EdgeField") -> "EdgeField":
        _check_same(self.geometry, other.geometry)
        return EdgeField(self.geometry, self.data + other.data)

    def __sub__(self, other: "EdgeField") -> "EdgeField":
        _check_same(self.geometry, other.geometry)
        return EdgeField(self.geometry, self.data - other.data)

    def __mul__(self, scalar: float) -> "EdgeField":
        return EdgeField(self.geometry, self.data * scalar)

    __rmul__ = __mul__


# --- array kernels -----------------------------------------------------------
# These operate on plain arrays so solvers can call them in tight loops.


def split_edges(flat: np.ndarray, m1: int, m2: int) -> tuple[np.ndarray, np.ndarray]:
    nx = (m1 - 1) * m2
    return flat[:nx].reshape(m1 - 1, m2), flat[nx:].reshape(m1, m2 - 1)


def div_flat(flat: np.ndarray, m1: int, m2: int, h: float = 1.0) -> np.ndarray:
    """Divergence of a flat edge vector on an ``m1 x m2`` block."""
    px, py = split_edges(flat, m1, m2)
    out = np.zeros((m1, m2))
    out[:-1, :] += px
    out[1:, :] -= px
    out[:, :-1] += py
    out[:, 1:] -= py
    if h != 1.0:
        out /= h
    return out


def div_adjoint_flat(u: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Adjoint of :func:`div_flat`: a flat vector of negative cell differences."""
    gx = u[:-1, :] - u[1:, :]
    gy = u[:, :-1] - u[:, 1:]
    out = np.concatenate([gx.ravel(), gy.ravel()])
    if h != 1.0:
        out /= h
    return out


# --- field-level operators ---------------------------------------------------


def divergence(p: EdgeField) -> CellField:
    g = p.geometry
    return CellField(g, div_flat(p.data, g.m1, g.m2, g.h))


def divergence_adjoint(u: CellField) -> EdgeField:
    g = u.geometry
    return EdgeField(g, div_adjoint_flat(u.values, g.h))


def inner_cells(u: CellField, v: CellField) -> float:
    _check_same(u.geometry, v.geometry)
    return float(u.geometry.h**2 * np.sum(u.values * v.values))


def inner_edges(p: EdgeField, q: EdgeField) -> float:
    _check_same(p.geometry, q.geometry)
    return float(p.geometry.h**2 * np.dot(p.data, q.data))


def norm_cells(u: CellField) -> float:
    return float(np.sqrt(inner_cells(u, u)))


def norm_edges(p: EdgeField) -> float:
    return float(np.sqrt(inner_edges(p, p)))


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    """Continuous piecewise (bi)linear scalar given by its vertex values.

    ``nodes`` has shape ``(m1 + 1, m2 + 1)``; vertex ``(a, b)`` sits at
    ``(a h, b h)``.
    """

    geometry: GridGeometry
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        g = self.geometry
        if nodes.shape != (g.m1 + 1, g.m2 + 1):
            raise GeometryError(f"cutoff has shape {nodes.shape}, expected {(g.m1 + 1, g.m2 + 1)}")
        object.__setattr__(self, "nodes", nodes)

    def edge_means(self) -> np.ndarray:
        """Mean of the cutoff along every interior edge, in flat edge order.

        Exact: the cutoff is linear along each mesh edge.
        """
        t = self.nodes
        # vertical edge (i, j) sits at x = (i+1) h between vertices (i+1, j), (i+1, j+1)
        ex = 0.5 * (t[1:-1, :-1] + t[1:-1, 1:])
        # horizontal edge (i, j) sits at y = (j+1) h between vertices (i, j+1), (i+1, j+1)
        ey = 0.5 * (t[:-1, 1:-1] + t[1:, 1:-1])
        return np.concatenate([ex.ravel(), ey.ravel()])

    def max_gradient(self) -> float:
        """Largest nodal difference quotient along mesh edges."""
        t = self.nodes
        h = self.geometry.h
        gx = np.abs(np.diff(t, axis=0)).max(initial=0.0)
        gy = np.abs(np.diff(t, axis=1)).max(initial=0.0)
        return float(max(gx, gy) / h)


def interpolate_cutoff(theta: CutoffFunction, p: EdgeField) -> EdgeField:
    """Nodal RT0 interpolant of ``theta * p``."""
    _check_same(theta.geometry, p.geometry)
    return EdgeField(p.geometry, p.data * theta.edge_means())


def inverse_inequality_check(p: EdgeField) -> tuple[float, float]:
    """Return ``(||div p||^2, 8/h^2 ||p||^2)``; the first never exceeds the second."""
    lhs = norm_cells(divergence(p)) ** 2
    rhs = 8.0 / p.geometry.h**2 * norm_edges(p) ** 2
    return lhs, rhs
