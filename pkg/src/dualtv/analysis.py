"""Convergence diagnostics and the stable-decomposition audit."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .grid import CellField, CutoffFunction, EdgeField, GeometryError, div_flat, interpolate_cutoff

if TYPE_CHECKING:
    from .schwarz import Decomposition


CSV_COLUMNS = ("iter", "energy", "gap", "rel_gap", "duality_gap", "decrease_lhs", "decrease_rhs", "wall_s", "psnr")


@dataclass(frozen=True)
class ConvergenceRecord:
    iteration: int
    energy: float
    gap: float
    rel_gap: float
    duality_gap: float
    decrease_lhs: float
    decrease_rhs: float
    wall_s: float
    psnr: float = math.nan
    local_iterations: int = 0

    def csv_row(self) -> list[str]:
        vals = [self.energy, self.gap, self.rel_gap, self.duality_gap,
                self.decrease_lhs, self.decrease_rhs, self.wall_s, self.psnr]
        return [str(self.iteration)] + [format(v, ".17g") for v in vals]


def psnr(u: CellField, u_orig: CellField) -> float:
    """Peak signal-to-noise ratio in dB for images with peak value 1."""
    if u.geometry != u_orig.geometry:
        raise GeometryError("psnr needs images on the same grid")
    g = u.geometry
    err = g.h**2 * float(np.sum((u.values - u_orig.values) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(g.area / err)


# --- pseudo-linear rate fitting ---------------------------------------------


@dataclass(frozen=True)
class RateFit:
    gamma: float
    threshold: float
    window_start: int
    window_end: int
    r_squared: float
    valid: bool


_INVALID = RateFit(math.nan, math.nan, 0, 0, math.nan, False)


def _plateau(a: np.ndarray) -> float:
    tail = a[-max(3, len(a) // 4):]
    tail = tail[tail > 0]
    if tail.size == 0:
        return 0.0
    if tail.max() <= 10.0 * tail.min():
        return float(np.median(tail))
    # still decaying at the end: no plateau reached
    return 0.0


def _longest_affine_window(x, y, min_window, min_r2, min_length):
    """Longest ``[s, e)`` with a line fit of ``r^2 >= min_r2``; earliest on ties."""
    cx, cy = np.cumsum(np.r_[0, x]), np.cumsum(np.r_[0, y])
    cxx, cyy, cxy = np.cumsum(np.r_[0, x * x]), np.cumsum(np.r_[0, y * y]), np.cumsum(np.r_[0, x * y])
    m = x.size
    for k in range(m, max(min_window, min_length) - 1, -1):
        for s in range(0, m - k + 1):
            e = s + k
            sx, sy = cx[e] - cx[s], cy[e] - cy[s]
            vx = cxx[e] - cxx[s] - sx * sx / k
            vy = cyy[e] - cyy[s] - sy * sy / k
            cov = cxy[e] - cxy[s] - sx * sy / k
            if vx <= 0:
                continue
            r2 = 1.0 if vy <= 1e-300 else cov * cov / (vx * vy)
            if r2 >= min_r2:
                return s, e, cov / vx, r2
    return None


def fit_pseudo_linear(seq: Sequence, min_window: int = 5, min_r2: float = 0.98,
                      resolution: float = 0.0) -> RateFit:
    """Fit ``a_n ~ c gamma^n + eps`` to a decaying gap sequence.

    ``eps`` is the median of the flat tail, or zero if the tail is still
    decaying, floored at ``resolution``: gaps below the floating-point resolution of the energy
    carry no information. ``gamma`` comes from a least-squares line through
    ``log(a_n - eps)`` over the longest contiguous window with
    ``r^2 >= min_r2``, using only points clearly above the plateau.
    Heuristic; intended for qualitative comparisons between runs.
    """
    a = np.array([getattr(x, "gap", x) for x in seq], dtype=float)
    if a.size < 10 or np.count_nonzero(a > 0) < 10:
        return _INVALID
    eps = max(_plateau(a), resolution)
    usable = a - eps > eps
    if not usable.any():
        return _INVALID
    n = np.arange(a.size, dtype=float)
    idx = np.flatnonzero(usable)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    best = None
    for run in runs:
        found = _longest_affine_window(n[run], np.log(a[run] - eps), min_window, min_r2,
                                       0 if best is None else best[1] - best[0] + 1)
        if found is not None:
            s, e, slope, r2 = found
            best = (int(run[s]), int(run[e - 1]) + 1, slope, r2)
    if best is None:
        return _INVALID
    start, end, slope, r2 = best
    gamma = math.exp(slope)
    return RateFit(gamma, eps, start, end, float(r2), 0.0 < gamma < 1.0)


# --- partition of unity and stable decomposition ----------------------------


def _ramp(geometry, rect, delta) -> np.ndarray:
    """Chebyshev-distance ramp to the inner boundary of ``rect``, on vertices."""
    m1, m2 = geometry.m1, geometry.m2
    x0, x1, y0, y1 = rect
    a = np.arange(m1 + 1, dtype=float)[:, None]
    b = np.arange(m2 + 1, dtype=float)[None, :]
    dist = np.full((m1 + 1, m2 + 1), np.inf)
    if x0 > 0:
        dist = np.minimum(dist, a - x0)
    if x1 < m1:
        dist = np.minimum(dist, x1 - a)
    if y0 > 0:
        dist = np.minimum(dist, b - y0)
    if y1 < m2:
        dist = np.minimum(dist, y1 - b)
    inside = (a >= x0) & (a <= x1) & (b >= y0) & (b <= y1)
    if delta > 0:
        psi = np.clip(dist / delta, 0.0, 1.0)
    else:
        psi = np.where(np.isinf(dist), 1.0, 0.0)
    return np.where(inside, psi, 0.0)


def build_partition_of_unity(decomposition: "Decomposition") -> list[CutoffFunction]:
    """One piecewise-linear cutoff per colour; they sum to one at every vertex."""
    g = decomposition.geometry
    raw = []
    for k in range(decomposition.n_colors):
        psi = np.zeros((g.m1 + 1, g.m2 + 1))
        for patch in decomposition.color_members(k):
            psi = np.maximum(psi, _ramp(g, patch.rect, decomposition.delta))
        raw.append(psi)
    total = np.sum(raw, axis=0)
    if np.any(total <= 0):
        raise ValueError("subdomains do not cover the image")
    return [CutoffFunction(g, psi / total) for psi in raw]


@dataclass(frozen=True)
class StableDecompositionReport:
    reassembly_error: float
    feasible: tuple[bool, ...]
    measured_c1: float
    measured_c2: float
    div_energy: float
    div_norm_sq: float
    norm_sq: float


def stable_decompose(decomposition: "Decomposition", thetas: Sequence[CutoffFunction],
                     p: EdgeField, q: EdgeField):
    """Split ``p - q`` as ``sum_k R_k* r_k`` with ``R_k* r_k = Pi_h(theta_k (p - q))``.

    Returns ``(r, report)`` where ``r[k]`` lists the local DOF vectors of the
    colour-``k`` patches. The measured constants split each colour's
    divergence into a cell-averaged ``theta div(p - q)`` part (giving
    ``c1``) and the remainder driven by the cutoff gradient (giving
    ``c2``), so ``sum_k ||div R_k* r_k||^2 <= c1 ||div e||^2 + c2 ||e||^2``
    holds with equality whenever ``c2 > 0``.
    """
    for x in (p, q):
        if np.any(np.abs(x.data) > 1.0):
            raise ValueError("stable decomposition needs feasible p and q")
    g = decomposition.geometry
    h2 = g.h**2
    e = p - q
    div_e = div_flat(e.data, g.m1, g.m2, g.h)
    recon = EdgeField.zeros(g)
    r, feasible = [], []
    s_total = 0.0
    a_total = 0.0
    for k, theta in enumerate(thetas):
        w = interpolate_cutoff(theta, e)
        members = decomposition.color_members(k)
        locals_k = [patch.restrict(w) for patch in members]
        ext = EdgeField.zeros(g)
        for patch, loc in zip(members, locals_k):
            patch.add_into(ext, loc)
        recon = recon + ext
        feasible.append(bool(np.all(np.abs((q + ext).data) <= 1.0)))
        d = div_flat(ext.data, g.m1, g.m2, g.h)
        s_total += h2 * float(np.sum(d * d))
        t = theta.nodes
        t_cell = 0.25 * (t[:-1, :-1] + t[1:, :-1] + t[:-1, 1:] + t[1:, 1:])
        a_total += h2 * float(np.sum((t_cell * div_e) ** 2))
        r.append(locals_k)
    scale = max(float(np.max(np.abs(e.data), initial=0.0)), 1e-300)
    err = float(np.max(np.abs(recon.data - e.data), initial=0.0)) / scale
    dn = h2 * float(np.sum(div_e * div_e))
    en = h2 * float(np.dot(e.data, e.data))
    c1 = a_total / dn if dn > 0 else 0.0
    c2 = max(0.0, s_total - c1 * dn) / en if en > 0 else 0.0
    report = StableDecompositionReport(err, tuple(feasible), c1, c2, s_total, dn, en)
    return r, report


def record_fields() -> list[str]:
    return [f.name for f in fields(ConvergenceRecord)]
