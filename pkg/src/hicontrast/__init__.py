"""Fibre-wise numerics for high-contrast (double-porosity) periodic homogenisation."""

__version__ = "0.1.0"

from .cell_model import (  # noqa: E402
    CellGeometry,
    CellModel,
    CoefficientSpec,
    build_cell,
    classical_model,
    default_model,
    laminate_model,
)
from .fem import AssembledForms, assemble_forms  # noqa: E402
from .homogenization import homogenize  # noqa: E402

__all__ = [
    "AssembledForms",
    "CellGeometry",
    "CellModel",
    "CoefficientSpec",
    "assemble_forms",
    "build_cell",
    "classical_model",
    "default_model",
    "homogenize",
    "laminate_model",
]
