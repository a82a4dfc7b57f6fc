"""Experiment orchestration: single denoising runs, parameter sweeps and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import CSV_COLUMNS, ConvergenceRecord, RateFit, fit_pseudo_linear, psnr
from .fista import DualProblem, FistaConfig, reference_minimum, solve
from .grid import CellField, EdgeField, GridGeometry
from .imageio import SYNTHETIC_KINDS, add_gaussian_noise, load_image, save_image, synthetic_image
from .models import EnergyModel, ModelKind
from .schwarz import ConfigurationError, SchwarzConfig, build_decomposition, solve_schwarz


@dataclass
class RunConfig:
    command: str = "denoise"
    model: str = "rof"
    lam: float = 10.0
    image: str | None = None
    synthetic: str = "blocks"
    size: int = 64
    noise_variance: float = 0.05
    seed: int = 1
    solver: str = "schwarz"
    n1: int = 2
    n2: int = 2
    delta: int = 8
    tau: float = 0.25
    outer_iterations: int = 100
    local_max_iterations: int = 1000
    local_tolerance: float = 1e-18
    warm_start: bool = False
    reference_iterations: int = 100_000
    output_image: str | None = None
    output_csv: str | None = None
    output_dir: str = "."
    threads: int = 1
    record_time: bool = True

    def validate(self) -> None:
        errors = []
        try:
            ModelKind(self.model)
        except ValueError:
            errors.append(f"model must be 'rof' or 'tvh1', got {self.model!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            errors.append(f"lam must be positive and finite, got {self.lam}")
        if self.image is None and self.synthetic not in SYNTHETIC_KINDS:
            errors.append(f"synthetic must be one of {SYNTHETIC_KINDS}, got {self.synthetic!r}")
        if self.image is None and self.size < 8:
            errors.append(f"size must be at least 8, got {self.size}")
        if not self.noise_variance >= 0:
            errors.append(f"noise_variance must be nonnegative, got {self.noise_variance}")
        if self.solver not in ("schwarz", "fista"):
            errors.append(f"solver must be 'schwarz' or 'fista', got {self.solver!r}")
        if self.n1 < 1 or self.n2 < 1:
            errors.append("n1 and n2 must be at least 1")
        if self.delta < 0:
            errors.append("delta must be nonnegative")
        if not 0 < self.tau <= 1:
            errors.append(f"tau must lie in (0, 1], got {self.tau}")
        if self.outer_iterations < 0:
            errors.append("outer_iterations must be nonnegative")
        if self.local_max_iterations < 1:
            errors.append("local_max_iterations must be at least 1")
        if self.local_tolerance < 0:
            errors.append("local_tolerance must be nonnegative")
        if self.reference_iterations < 0:
            errors.append("reference_iterations must be nonnegative")
        if self.threads < 1:
            errors.append("threads must be at least 1")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class Problem:
    clean: CellField | None
    noisy: CellField
    model: EnergyModel
    maxval: int = 255


def build_problem(cfg: RunConfig) -> Problem:
    if cfg.image is not None:
        clean, maxval = load_image(cfg.image)
    else:
        clean, maxval = synthetic_image(cfg.synthetic, cfg.size), 255
    noisy = add_gaussian_noise(clean, cfg.noise_variance, cfg.seed)
    return Problem(clean, noisy, EnergyModel(cfg.model, cfg.lam, noisy), maxval)


@dataclass
class RunResult:
    config: RunConfig
    restored: CellField
    records: list[ConvergenceRecord]
    reference_energy: float
    psnr_noisy: float
    psnr_restored: float
    final_energy: float
    p: EdgeField = field(repr=False)

    def summary(self) -> str:
        c = self.config
        last = self.records[-1] if self.records else None
        lines = [
            f"solver            {c.solver}",
            f"model             {c.model} lam={c.lam:g}",
            f"grid              {self.restored.geometry.m1}x{self.restored.geometry.m2}",
            f"iterations        {len(self.records)}",
            f"final energy      {self.final_energy:.12g}",
            f"reference energy  {self.reference_energy:.12g}",
            f"final rel gap     {last.rel_gap:.3e}" if last else "final rel gap     n/a",
            f"duality gap       {last.duality_gap:.3e}" if last else "duality gap       n/a",
            f"PSNR noisy        {self.psnr_noisy:.2f} dB",
            f"PSNR restored     {self.psnr_restored:.2f} dB",
        ]
        return "\n".join(lines) + "\n"


def _reference(model: EnergyModel, iterations: int) -> float:
    if iterations == 0:
        return math.nan
    return reference_minimum(model, iterations)[1]


def _fista_records(model: EnergyModel, cfg: RunConfig, reference: float, clean: CellField | None):
    """Global FISTA run logging one record per iteration."""
    g = model.geometry
    energy0 = model.energy(EdgeField.zeros(g))
    zeta0 = energy0 - reference
    records: list[ConvergenceRecord] = []
    state = {"energy": energy0, "t": time.monotonic()}

    def log(k: int, x: np.ndarray) -> None:
        p = EdgeField(g, x)
        e = model.energy(p)
        now = time.monotonic()
        gap = e - reference
        records.append(ConvergenceRecord(
            iteration=k,
            energy=e,
            gap=gap,
            rel_gap=gap / zeta0 if zeta0 != 0 else math.nan,
            duality_gap=model.duality_gap(p),
            decrease_lhs=state["energy"] - e,
            decrease_rhs=math.nan,
            wall_s=now - state["t"] if cfg.record_time else 0.0,
            psnr=psnr(model.recover_primal(p), clean) if clean is not None else math.nan,
        ))
        state["energy"], state["t"] = e, now

    if cfg.outer_iterations == 0:
        return EdgeField.zeros(g), records
    fcfg = FistaConfig(L=model.lipschitz, max_iterations=cfg.outer_iterations, divergence_tolerance=0.0)
    res = solve(DualProblem(model), np.zeros(g.n_edges), fcfg, callback=log)
    return EdgeField(g, res.x), records


def run_denoise(cfg: RunConfig, problem: Problem | None = None, reference: float | None = None,
                write: bool = True) -> RunResult:
    """Solve one problem and (optionally) write the image and CSV outputs."""
    cfg.validate()
    problem = problem or build_problem(cfg)
    model = problem.model
    if reference is None:
        reference = _reference(model, cfg.reference_iterations)
    if cfg.solver == "fista":
        p, records = _fista_records(model, cfg, reference, problem.clean)
    else:
        d = build_decomposition(model.geometry, cfg.n1, cfg.n2, cfg.delta)
        local = FistaConfig(L=model.lipschitz, max_iterations=cfg.local_max_iterations,
                            divergence_tolerance=cfg.local_tolerance)
        scfg = SchwarzConfig(tau=cfg.tau, outer_iterations=cfg.outer_iterations, local=local,
                             n1=cfg.n1, n2=cfg.n2, delta=cfg.delta, warm_start=cfg.warm_start)
        p, records = solve_schwarz(model, d, scfg, reference_energy=None if math.isnan(reference) else reference,
                                   clean=problem.clean, workers=cfg.threads, record_time=cfg.record_time)
    restored = model.recover_primal(p)
    clean = problem.clean
    result = RunResult(
        config=cfg,
        restored=restored,
        records=records,
        reference_energy=reference,
        psnr_noisy=psnr(problem.noisy, clean) if clean is not None else math.nan,
        psnr_restored=psnr(restored, clean) if clean is not None else math.nan,
        final_energy=model.energy(p),
        p=p,
    )
    if write:
        if cfg.output_csv:
            write_csv(cfg.output_csv, records, csv_comment(cfg, reference))
        if cfg.output_image:
            save_image(restored, cfg.output_image, problem.maxval)
    return result


def csv_comment(cfg: RunConfig, reference: float) -> str:
    src = cfg.image if cfg.image is not None else f"synthetic:{cfg.synthetic}:{cfg.size}"
    parts = [
        f"solver={cfg.solver}", f"model={cfg.model}", f"lam={cfg.lam!r}", f"image={src}",
        f"noise_variance={cfg.noise_variance!r}", f"seed={cfg.seed}",
        f"n1={cfg.n1}", f"n2={cfg.n2}", f"delta={cfg.delta}", f"tau={cfg.tau!r}",
        f"reference_iterations={cfg.reference_iterations}", f"reference_energy={reference:.17g}",
    ]
    return " ".join(parts)


def format_csv(records: Sequence[ConvergenceRecord], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_csv(path: str | os.PathLike, records: Sequence[ConvergenceRecord], comment: str | None = None) -> None:
    Path(path).write_text(format_csv(records, comment))


# --- sweeps ------------------------------------------------------------------


@dataclass
class ExperimentSweep:
    """Vary ``delta`` (values are ints) or the subdomain grid (values are ``(n1, n2)``)."""

    kind: str
    values: list
    base: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> None:
        if self.kind not in ("delta", "domains"):
            raise ConfigurationError(f"sweep kind must be 'delta' or 'domains', got {self.kind!r}")
        self.base.validate()
        m1 = self.base.size if self.base.image is None else None
        for v in self.values:
            cfg = self.point_config(v)
            if m1 is not None:
                build_decomposition(GridGeometry(m1, m1), cfg.n1, cfg.n2, cfg.delta)

    def point_config(self, value) -> RunConfig:
        if self.kind == "delta":
            return self.base.replace(delta=int(value), solver="schwarz")
        n1, n2 = value
        return self.base.replace(n1=int(n1), n2=int(n2), solver="schwarz")

    def label(self, value) -> str:
        return f"delta_{int(value)}" if self.kind == "delta" else f"domains_{value[0]}x{value[1]}"


@dataclass
class SweepPoint:
    value: object
    result: RunResult
    fit: RateFit
    csv_path: Path | None


@dataclass
class SweepResult:
    sweep: ExperimentSweep
    points: list[SweepPoint]
    reference_energy: float

    def threshold_nonincreasing(self, slack: float = 0.10) -> bool:
        eps = [pt.fit.threshold for pt in self.points]
        return all(b <= a * (1 + slack) for a, b in zip(eps, eps[1:]))

    def gamma_spread(self) -> float:
        gs = [pt.fit.gamma for pt in self.points if pt.fit.valid]
        return max(gs) / min(gs) if len(gs) > 1 else 1.0

    def summary(self) -> str:
        out = io.StringIO()
        out.write(f"# {self.sweep.kind} sweep, reference energy {self.reference_energy:.17g}\n")
        out.write("point,gamma,threshold,window_start,window_end,r_squared,final_rel_gap\n")
        for pt in self.points:
            f = pt.fit
            last = pt.result.records[-1].rel_gap if pt.result.records else math.nan
            out.write(f"{self.sweep.label(pt.value)},{f.gamma:.6g},{f.threshold:.6g},"
                      f"{f.window_start},{f.window_end},{f.r_squared:.6g},{last:.6g}\n")
        if self.points:
            out.write(f"# gamma max/min ratio: {self.gamma_spread():.4f}\n")
            if self.sweep.kind == "delta":
                out.write(f"# threshold nonincreasing in delta: {self.threshold_nonincreasing()}\n")
        return out.getvalue()


def gap_resolution(reference: float, zeta0: float) -> float:
    """Smallest meaningful relative gap: a few ulps of the energy, over ``zeta0``."""
    return 16.0 * float(np.spacing(abs(reference))) / zeta0


def run_sweep(sweep: ExperimentSweep, write: bool = True) -> SweepResult:
    """Run every sweep point on one shared problem and reference minimum."""
    sweep.validate()
    if not sweep.values:
        return SweepResult(sweep, [], math.nan)
    base = sweep.base
    problem = build_problem(base)
    reference = _reference(problem.model, base.reference_iterations)
    zeta0 = problem.model.energy(EdgeField.zeros(problem.model.geometry)) - reference
    resolution = gap_resolution(reference, zeta0) if zeta0 > 0 else 0.0
    out_dir = Path(base.output_dir)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    points = []
    for v in sweep.values:
        cfg = sweep.point_config(v).replace(output_image=None, output_csv=None)
        res = run_denoise(cfg, problem, reference, write=False)
        fit = fit_pseudo_linear([r.rel_gap for r in res.records], resolution=resolution)
        path = None
        if write:
            path = out_dir / f"{sweep.label(v)}.csv"
            write_csv(path, res.records, csv_comment(cfg, reference))
        points.append(SweepPoint(v, res, fit, path))
    result = SweepResult(sweep, points, reference)
    if write:
        (out_dir / f"{sweep.kind}_summary.txt").write_text(result.summary())
    return result
