"""Nonlinear-Fourier-domain simulation of a soliton WDM link with PIC multiplexing."""

from .field import SampledField
from .nft import DiscreteEigen, NftSpectrum, find_eigenvalues, nft, scatter_coeffs
from .norm import FiberParams, NormScales, derive_scales, to_normalized, to_physical

__version__ = "0.1.0"

__all__ = [
    "SampledField", "DiscreteEigen", "NftSpectrum", "find_eigenvalues", "nft", "scatter_coeffs",
    "FiberParams", "NormScales", "derive_scales", "to_normalized", "to_physical",
]
