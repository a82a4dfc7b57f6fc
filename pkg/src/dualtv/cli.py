"""Command-line driver.

Exit codes: 0 success, 2 bad configuration, 3 file I/O failure,
4 solver failure (non-finite iterate or failed self-test).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .experiments import ExperimentSweep, RunConfig, run_denoise, run_sweep
from .fista import SolverError
from .imageio import ImageIOError
from .schwarz import ConfigurationError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 2, 3, 4

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "command"}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(name: str):
    default = _FIELDS[name].default
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ImageIOError(f"{path}: {err.strerror or err}") from err
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _converter(key)(value)
        except ValueError as err:
            raise ConfigurationError(f"{path}:{lineno}: {err}") from None
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    g = p.add_argument_group("problem")
    g.add_argument("--model", choices=["rof", "tvh1"])
    g.add_argument("--lam", type=float)
    g.add_argument("--image", help="input PGM (P2/P5); default is a synthetic image")
    g.add_argument("--synthetic", help="synthetic image kind: blocks or blocks-ramp")
    g.add_argument("--size", type=int, help="synthetic image side length")
    g.add_argument("--noise-variance", type=float)
    g.add_argument("--seed", type=int)
    g = p.add_argument_group("solver")
    g.add_argument("--solver", choices=["schwarz", "fista"])
    g.add_argument("--n1", type=int)
    g.add_argument("--n2", type=int)
    g.add_argument("--delta", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--outer-iterations", type=int)
    g.add_argument("--local-max-iterations", type=int)
    g.add_argument("--local-tolerance", type=float)
    g.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--reference-iterations", type=int)
    g.add_argument("--threads", type=int, help="worker threads for local solves (speed only)")
    g = p.add_argument_group("output")
    g.add_argument("--output-image")
    g.add_argument("--output-csv")
    g.add_argument("--output-dir")
    g.add_argument("--record-time", action=argparse.BooleanOptionalAction, default=None,
                   help="log wall time per iteration; disable for byte-reproducible CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualtv", description="Dual TV restoration with additive Schwarz.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("denoise", "restore one image"), ("compare", "run Schwarz and FISTA on one problem")]:
        _add_run_flags(sub.add_parser(name, help=text))
    sp = sub.add_parser("sweep-delta", help="vary the overlap width")
    _add_run_flags(sp)
    sp.add_argument("--values", default="2,4,8,16", help="comma-separated overlap widths")
    sp = sub.add_parser("sweep-domains", help="vary the subdomain grid")
    _add_run_flags(sp)
    sp.add_argument("--values", default="2x2,4x4", help="comma-separated grids like 2x2,4x4")
    sub.add_parser("selftest", help="quick numerical sanity checks")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(command=args.command, **values)
    cfg.validate()
    return cfg


def _parse_values(kind: str, text: str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        if kind == "delta":
            return [int(t) for t in items]
        out = []
        for t in items:
            a, b = t.lower().split("x")
            out.append((int(a), int(b)))
        return out
    except ValueError:
        raise ConfigurationError(f"cannot parse sweep values {text!r}") from None


def _cmd_denoise(cfg: RunConfig) -> int:
    res = run_denoise(cfg)
    sys.stdout.write(res.summary())
    return EXIT_OK


def _cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    a = run_denoise(cfg.replace(solver="schwarz", output_csv=str(out / "schwarz.csv"), output_image=None))
    b = run_denoise(cfg.replace(solver="fista", output_csv=str(out / "fista.csv"), output_image=None))
    rel = abs(a.final_energy - b.final_energy) / max(abs(b.final_energy), 1e-300)
    sys.stdout.write(a.summary() + "\n" + b.summary())
    sys.stdout.write(f"\nrelative energy difference  {rel:.3e}\n")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, kind: str, values: list) -> int:
    res = run_sweep(ExperimentSweep(kind, values, cfg))
    sys.stdout.write(res.summary())
    return EXIT_OK


def _cmd_selftest() -> int:
    from .fista import reference_minimum
    from .grid import CellField, EdgeField, GridGeometry, div_adjoint_flat, div_flat
    from .models import EnergyModel
    from .schwarz import SchwarzConfig, build_decomposition, solve_schwarz

    rng = np.random.default_rng(0)
    g = GridGeometry(24, 20)
    ok = True

    def report(name: str, passed: bool, detail: str) -> None:
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")

    p = rng.standard_normal(g.n_edges)
    u = rng.standard_normal(g.shape)
    err = abs(np.sum(div_flat(p, g.m1, g.m2) * u) - np.dot(p, div_adjoint_flat(u)))
    report("adjoint", err < 1e-10, f"|<div p,u> - <p,div* u>| = {err:.2e}")
    d = div_flat(p, g.m1, g.m2)
    ratio = np.sum(d * d) / (8 * np.dot(p, p))
    report("inverse inequality", ratio <= 1.0, f"||div p||^2 / (8||p||^2) = {ratio:.3f}")
    f = CellField(g, rng.uniform(0, 1, g.shape))
    model = EnergyModel("rof", 10.0, f)
    _, fstar = reference_minimum(model, 20_000)
    dec = build_decomposition(g, 2, 2, 4)
    ps, recs = solve_schwarz(model, dec, SchwarzConfig(outer_iterations=60), reference_energy=fstar)
    report("schwarz vs fista", recs[-1].rel_gap < 1e-6, f"relative gap after 60 steps = {recs[-1].rel_gap:.2e}")
    gap = model.duality_gap(ps)
    report("duality gap", -1e-9 <= gap < 1e-3, f"{gap:.2e}")
    feasible = bool(np.all(np.abs(ps.data) <= 1.0))
    report("feasibility", feasible, "all |p_e| <= 1" if feasible else "violated")
    return EXIT_OK if ok else EXIT_SOLVER


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "selftest":
            return _cmd_selftest()
        cfg = config_from_args(args)
        if args.command == "denoise":
            return _cmd_denoise(cfg)
        if args.command == "compare":
            return _cmd_compare(cfg)
        kind = "delta" if args.command == "sweep-delta" else "domains"
        return _cmd_sweep(cfg, kind, _parse_values(kind, args.values))
    except (ConfigurationError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImageIOError, OSError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, FloatingPointError) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
