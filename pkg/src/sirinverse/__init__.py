"""Reconstruction of space-dependent infection and recovery rates of a
spatial S-I-R epidemic model from one interior snapshot and lateral
boundary data, via minimization of a Carleman-weighted least-squares
functional with affine boundary constraints.

High-level entry points:

* :class:`sirinverse.estimator.CarlemanSirInverter` fits coefficient and
  population fields to an :class:`~sirinverse.observation.ObservationSet`.
* :mod:`sirinverse.cli` drives the full pipeline (forward simulation,
  synthetic data generation, inversion, diagnostics) from TOML configs.
"""

from .errors import (
    ConfigError,
    KappaError,
    LineSearchError,
    NumericalError,
    SirInverseError,
)
from .grid import Grid, ScalarField, SpatialField, build_grid

__all__ = [
    "Grid",
    "ScalarField",
    "SpatialField",
    "build_grid",
    "SirInverseError",
    "ConfigError",
    "NumericalError",
    "KappaError",
    "LineSearchError",
]

__version__ = "0.1.0"
