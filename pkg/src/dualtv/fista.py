"""Projected FISTA for box-constrained smooth dual problems.

The same loop drives the global dual problem (baseline and reference
solves) and every subdomain problem inside the Schwarz iteration.
Problems are adapters exposing ``value``, ``gradient``, ``project`` and a
``change`` measure on flat numpy vectors.

Problems whose smooth part only sees a linear image of the variable
(``F(x) = G(A x)``, here ``A = div``) may additionally expose
``image(x)``, ``value_from_image(a)`` and ``gradient_from_image(a)``;
the solver then carries ``A x`` and ``A y`` through the recursion and
applies ``A`` once per iteration instead of twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .grid import EdgeField, div_adjoint_flat, div_flat
from .models import EnergyModel


class SolverError(RuntimeError):
    """Raised when an iterate or gradient becomes non-finite."""

    def __init__(self, message: str, iteration: int, state: np.ndarray | None = None):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.state = state


@dataclass
class FistaConfig:
    L: float
    max_iterations: int = 1000
    divergence_tolerance: float = 1e-18
    log_every: int = 0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"Lipschitz constant must be positive, got {self.L}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.divergence_tolerance < 0:
            raise ValueError("divergence_tolerance must be nonnegative")


class SmoothProblem(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def project(self, x: np.ndarray) -> np.ndarray: ...

    def change(self, dx: np.ndarray) -> float:
        """Size of a step ``dx``, compared against the stop tolerance."""
        ...


@dataclass
class FistaResult:
    x: np.ndarray
    iterations: int
    trace: list[float] = field(default_factory=list)
    converged: bool = False


IterationCallback = Callable[[int, np.ndarray], None]


def solve(problem: SmoothProblem, x0: np.ndarray, cfg: FistaConfig,
          callback: IterationCallback | None = None) -> FistaResult:
    """Run projected FISTA from ``x0`` (projected on entry).

    Stops after the first iteration whose step satisfies
    ``problem.change(x_new - x) <= cfg.divergence_tolerance``, or after
    ``cfg.max_iterations`` iterations. ``trace`` holds ``value(x)`` at
    ``x0`` and then every ``log_every`` iterations (and at the end).
    ``callback(k, x)`` sees every iterate; it must not modify ``x``.
    """
    if hasattr(problem, "image"):
        return _solve_with_image(problem, x0, cfg, callback)

    step = 1.0 / cfg.L
    x = problem.project(np.asarray(x0, dtype=float))
    y = x
    t = 1.0
    trace = [problem.value(x)] if cfg.log_every else []
    converged = False
    k = 0
    for k in range(1, cfg.max_iterations + 1):
        g = problem.gradient(y)
        x_new = problem.project(y - step * g)
        dx = x_new - x
        measure = problem.change(dx)
        if not math.isfinite(measure):
            raise SolverError("non-finite iterate", k, x)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * dx
        x, t = x_new, t_new
        if callback is not None:
            callback(k, x)
        if cfg.log_every and k % cfg.log_every == 0:
            trace.append(problem.value(x))
        if measure <= cfg.divergence_tolerance:
            converged = True
            break
    if cfg.log_every and k % cfg.log_every != 0:
        trace.append(problem.value(x))
    return FistaResult(x, k, trace, converged)


def _solve_with_image(problem, x0: np.ndarray, cfg: FistaConfig, callback=None) -> FistaResult:
    step = 1.0 / cfg.L
    x = problem.project(np.asarray(x0, dtype=float))
    y = x
    ax = problem.image(x)
    ay = ax
    t = 1.0
    trace = [problem.value_from_image(ax)] if cfg.log_every else []
    converged = False
    k = 0
    for k in range(1, cfg.max_iterations + 1):
        g = problem.gradient_from_image(ay)
        x_new = problem.project(y - step * g)
        dx = x_new - x
        ax_new = problem.image(x_new)
        da = ax_new - ax
        measure = problem.change_from_image(da)
        if not math.isfinite(measure):
            raise SolverError("non-finite iterate", k, x)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        y = x_new + beta * dx
        ay = ax_new + beta * da
        x, ax, t = x_new, ax_new, t_new
        if callback is not None:
            callback(k, x)
        if cfg.log_every and k % cfg.log_every == 0:
            trace.append(problem.value_from_image(ax))
        if measure <= cfg.divergence_tolerance:
            converged = True
            break
    if cfg.log_every and k % cfg.log_every != 0:
        trace.append(problem.value_from_image(ax))
    return FistaResult(x, k, trace, converged)


class DualProblem:
    """The global dual problem ``min_{p in C} F(p)`` as a FISTA adapter."""

    def __init__(self, model: EnergyModel):
        self.model = model
        g = model.geometry
        self.m1, self.m2, self.h = g.m1, g.m2, g.h
        self.h2 = g.h**2
        self.area = g.area

    def image(self, x):
        return div_flat(x, self.m1, self.m2, self.h)

    def value_from_image(self, a):
        return self.model.conjugate(a)

    def gradient_from_image(self, a):
        return div_adjoint_flat(self.model.conjugate_gradient(a), self.h)

    def change_from_image(self, da):
        return self.h2 * float(np.sum(da * da)) / self.area

    def value(self, x):
        return self.value_from_image(self.image(x))

    def gradient(self, x):
        return self.gradient_from_image(self.image(x))

    def project(self, x):
        return np.clip(x, -1.0, 1.0)

    def change(self, dx):
        return self.change_from_image(self.image(dx))


def reference_minimum(
    model: EnergyModel,
    iterations: int,
    p0: EdgeField | None = None,
    tolerance: float = 0.0,
) -> tuple[EdgeField, float]:
    """Long FISTA run on the global dual; returns ``(p_star, F(p_star))``."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    g = model.geometry
    x0 = np.zeros(g.n_edges) if p0 is None else p0.data
    cfg = FistaConfig(L=model.lipschitz, max_iterations=iterations, divergence_tolerance=tolerance)
    result = solve(DualProblem(model), x0, cfg)
    p_star = EdgeField(g, result.x)
    return p_star, model.energy(p_star)
