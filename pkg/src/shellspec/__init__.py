"""Boundary-integral numerics for Dirac operators with delta-shell interactions."""
from __future__ import annotations

__version__ = "0.1.0"

from .gamma import Coupling, classify, conjugate_and_sgn, coupling_matrix, dirac_matrices
from .geometry import GeometrySpec, SurfaceQuadrature, build_quadrature
from .kernels import SpectralParam
from .operators import BoundaryOperator, assemble_cauchy, assemble_single_layer, assemble_W, lambda_operators
from .resolvent import KreinResolvent, PointSource, krein_apply
from .spectral import GapSpectrumEstimator, SpectralScan, scan

__all__ = [
    "__version__",
    "Coupling",
    "classify",
    "conjugate_and_sgn",
    "coupling_matrix",
    "dirac_matrices",
    "GeometrySpec",
    "SurfaceQuadrature",
    "build_quadrature",
    "SpectralParam",
    "BoundaryOperator",
    "assemble_cauchy",
    "assemble_single_layer",
    "assemble_W",
    "lambda_operators",
    "KreinResolvent",
    "PointSource",
    "krein_apply",
    "GapSpectrumEstimator",
    "SpectralScan",
    "scan",
]
