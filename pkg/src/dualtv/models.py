"""Dual total-variation objectives.

Both models have the form ``F(p) = Fstar(div p)`` over the box
``C = {p : |p_e| <= 1}``:

* ROF:     ``Fstar(v) = 1/(2 lam) ||v + lam f||^2``
* TV-H^-1: ``Fstar(v) = 1/(2 lam) <K v, v> + <f, v>``

where ``K`` is the 5-point Dirichlet Laplacian. The discrete primal TV is
the support function of ``C``, i.e. ``h * sum |jump|`` over interior edges,
which makes the duality gap exact at the discrete level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    CellField,
    EdgeField,
    GeometryError,
    GridGeometry,
    div_adjoint_flat,
    div_flat,
)


class ModelKind(str, enum.Enum):
    ROF = "rof"
    TVH1 = "tvh1"


def laplacian_array(u: np.ndarray, h: float = 1.0) -> np.ndarray:
    """5-point ``-Laplace`` with zero Dirichlet ghosts, on a plain array."""
    out = 4.0 * u
    out[1:, :] -= u[:-1, :]
    out[:-1, :] -= u[1:, :]
    out[:, 1:] -= u[:, :-1]
    out[:, :-1] -= u[:, 1:]
    if h != 1.0:
        out /= h * h
    return out


def apply_laplacian(u: CellField) -> CellField:
    return CellField(u.geometry, laplacian_array(u.values, u.geometry.h))


def laplacian_matrix(geometry: GridGeometry) -> sp.csc_matrix:
    """Sparse matrix of :func:`laplacian_array` acting on ``u.ravel()`` (row-major)."""
    def tridiag(m):
        return sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])

    m1, m2 = geometry.m1, geometry.m2
    K = sp.kron(tridiag(m1), sp.identity(m2)) + sp.kron(sp.identity(m1), tridiag(m2))
    return (K / geometry.h**2).tocsc()


def laplacian_eigen_bounds(geometry: GridGeometry) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the Dirichlet 5-point Laplacian."""
    def ev(k, m):
        return 4.0 * math.sin(k * math.pi / (2 * (m + 1))) ** 2

    m1, m2, h = geometry.m1, geometry.m2, geometry.h
    lo = (ev(1, m1) + ev(1, m2)) / h**2
    hi = (ev(m1, m1) + ev(m2, m2)) / h**2
    return lo, hi


def project_feasible(p: EdgeField) -> EdgeField:
    """Euclidean projection onto C (componentwise clamp to [-1, 1])."""
    return EdgeField(p.geometry, np.clip(p.data, -1.0, 1.0))


def total_variation(u: CellField) -> float:
    """Anisotropic discrete TV, ``sup_{p in C} <u, div p>``."""
    g = u.geometry
    jumps = np.abs(np.diff(u.values, axis=0)).sum() + np.abs(np.diff(u.values, axis=1)).sum()
    return float(g.h * jumps)


@dataclass(eq=False)
class EnergyModel:
    kind: ModelKind
    lam: float
    f: CellField
    _lu: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.f.is_finite():
            raise ValueError("observed image has non-finite values")

    @property
    def geometry(self) -> GridGeometry:
        return self.f.geometry

    @property
    def lipschitz(self) -> float:
        h = self.geometry.h
        if self.kind is ModelKind.ROF:
            return 8.0 / (self.lam * h**2)
        return 64.0 / (self.lam * h**4)

    @cached_property
    def beta(self) -> float:
        """Lipschitz constant of the primal fidelity's derivative."""
        if self.kind is ModelKind.ROF:
            return self.lam
        return self.lam / laplacian_eigen_bounds(self.geometry)[0]

    @cached_property
    def alpha(self) -> float:
        """Strong convexity modulus of the primal fidelity."""
        if self.kind is ModelKind.ROF:
            return self.lam
        return self.lam / laplacian_eigen_bounds(self.geometry)[1]

    @property
    def gap_constant(self) -> float:
        if self.kind is ModelKind.ROF:
            h = self.geometry.h
            return 0.5 * self.lam * h**2 * float(np.sum(self.f.values**2))
        return 0.0

    def _check(self, p) -> None:
        if p.geometry != self.geometry:
            raise GeometryError(f"field on {p.geometry}, model on {self.geometry}")

    # -- conjugate of the fidelity, on cell arrays --------------------------

    def conjugate(self, v: np.ndarray) -> float:
        h2 = self.geometry.h**2
        if self.kind is ModelKind.ROF:
            w = v + self.lam * self.f.values
            return float(h2 * np.sum(w * w) / (2.0 * self.lam))
        Kv = laplacian_array(v, self.geometry.h)
        return float(h2 * (np.sum(Kv * v) / (2.0 * self.lam) + np.sum(self.f.values * v)))

    def conjugate_gradient(self, v: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.ROF:
            return (v + self.lam * self.f.values) / self.lam
        return laplacian_array(v, self.geometry.h) / self.lam + self.f.values

    # -- dual objective ------------------------------------------------------

    def energy(self, p: EdgeField) -> float:
        self._check(p)
        g = self.geometry
        return self.conjugate(div_flat(p.data, g.m1, g.m2, g.h))

    def gradient(self, p: EdgeField) -> EdgeField:
        self._check(p)
        g = self.geometry
        v = div_flat(p.data, g.m1, g.m2, g.h)
        return EdgeField(g, div_adjoint_flat(self.conjugate_gradient(v), g.h))

    def bregman(self, p: EdgeField, q: EdgeField) -> float:
        self._check(p)
        self._check(q)
        g = self.geometry
        grad_q = self.gradient(q)
        return self.energy(p) - self.energy(q) - g.h**2 * float(np.dot(grad_q.data, p.data - q.data))

    # -- primal side ---------------------------------------------------------

    def recover_primal(self, p: EdgeField) -> CellField:
        self._check(p)
        g = self.geometry
        d = div_flat(p.data, g.m1, g.m2, g.h)
        if self.kind is ModelKind.TVH1:
            d = laplacian_array(d, g.h)
        return CellField(g, self.f.values + d / self.lam)

    def _solve_laplacian(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            self._lu = spla.splu(laplacian_matrix(self.geometry))
        return self._lu.solve(rhs.ravel()).reshape(rhs.shape)

    def fidelity(self, u: CellField) -> float:
        self._check(u)
        h2 = self.geometry.h**2
        r = u.values - self.f.values
        if self.kind is ModelKind.ROF:
            return 0.5 * self.lam * h2 * float(np.sum(r * r))
        return 0.5 * self.lam * h2 * float(np.sum(self._solve_laplacian(r) * r))

    def primal_energy(self, u: CellField) -> float:
        value = self.fidelity(u) + total_variation(u)
        if not math.isfinite(value):
            raise FloatingPointError("primal energy is not finite")
        return value

    def duality_gap(self, p: EdgeField) -> float:
        """Primal energy of the recovered image plus dual energy, minus the model constant."""
        gap = self.primal_energy(self.recover_primal(p)) + self.energy(p) - self.gap_constant
        if not math.isfinite(gap):
            raise FloatingPointError("duality gap is not finite")
        return gap

    # -- localisation for subdomain solves ------------------------------------

    def localize(self, rect: tuple[int, int, int, int], v: np.ndarray) -> "LocalConjugate":
        """Restrict ``Fstar`` to the cells of ``rect`` with ``v`` frozen elsewhere.

        ``rect = (x0, x1, y0, y1)`` in cell indices (half-open). Only the
        values of ``v`` outside the rectangle are used.
        """
        return LocalConjugate(self, rect, v)


class LocalConjugate:
    """``Fstar`` as a function of the cell values inside one rectangle.

    Everything outside the rectangle is folded into a constant (and, for
    the Laplacian model, a linear coupling term), so evaluating the value
    and gradient costs only the rectangle's size.
    """

    def __init__(self, model: EnergyModel, rect, v: np.ndarray):
        x0, x1, y0, y1 = rect
        g = model.geometry
        self.model = model
        self.h2 = g.h**2
        self.h = g.h
        self.lam = model.lam
        self.kind = model.kind
        fP = model.f.values[x0:x1, y0:y1]
        outside = np.array(v, dtype=float, copy=True)
        outside[x0:x1, y0:y1] = 0.0
        lam = model.lam
        if model.kind is ModelKind.ROF:
            self.shift = lam * fP
            w = outside + lam * model.f.values
            w[x0:x1, y0:y1] = 0.0
            self.const = self.h2 * float(np.sum(w * w)) / (2.0 * lam)
        else:
            Kout = laplacian_array(outside, g.h)
            self.fP = fP
            self.coupling = Kout[x0:x1, y0:y1].copy()
            self.const = self.h2 * (
                float(np.sum(Kout * outside)) / (2.0 * lam) + float(np.sum(model.f.values * outside))
            )

    def value(self, vP: np.ndarray) -> float:
        if self.kind is ModelKind.ROF:
            w = vP + self.shift
            return self.const + self.h2 * float(np.sum(w * w)) / (2.0 * self.lam)
        KvP = laplacian_array(vP, self.h)
        return self.const + self.h2 * (
            float(np.sum((KvP + 2.0 * self.coupling) * vP)) / (2.0 * self.lam) + float(np.sum(self.fP * vP))
        )

    def gradient(self, vP: np.ndarray) -> np.ndarray:
        if self.kind is ModelKind.ROF:
            return (vP + self.shift) / self.lam
        return (laplacian_array(vP, self.h) + self.coupling) / self.lam + self.fP


# module-level spellings of the model methods


def dual_energy(model: EnergyModel, p: EdgeField) -> float:
    return model.energy(p)


def dual_gradient(model: EnergyModel, p: EdgeField) -> EdgeField:
    return model.gradient(p)


def bregman_distance(model: EnergyModel, p: EdgeField, q: EdgeField) -> float:
    return model.bregman(p, q)


def recover_primal(model: EnergyModel, p: EdgeField) -> CellField:
    return model.recover_primal(p)


def primal_energy(model: EnergyModel, u: CellField) -> float:
    return model.primal_energy(u)


def duality_gap(model: EnergyModel, p: EdgeField) -> float:
    return model.duality_gap(p)
