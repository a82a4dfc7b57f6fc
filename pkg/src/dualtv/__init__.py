"""Overlapping additive Schwarz and projected FISTA for dual TV restoration."""

from .grid import CellField, CutoffFunction, EdgeField, GeometryError, GridGeometry
from .models import EnergyModel, ModelKind
from .fista import FistaConfig, reference_minimum
from .schwarz import SchwarzConfig, build_decomposition, solve_schwarz
from .analysis import fit_pseudo_linear, psnr
from .imageio import add_gaussian_noise, load_image, save_image
from .experiments import RunConfig, run_denoise

__all__ = [
    "CellField",
    "CutoffFunction",
    "EdgeField",
    "EnergyModel",
    "FistaConfig",
    "GeometryError",
    "GridGeometry",
    "ModelKind",
    "RunConfig",
    "SchwarzConfig",
    "add_gaussian_noise",
    "build_decomposition",
    "fit_pseudo_linear",
    "load_image",
    "psnr",
    "reference_minimum",
    "run_denoise",
    "save_image",
    "solve_schwarz",
]
