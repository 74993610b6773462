"""Numerical verification of Sasakian structures and their symplectic reductions.

The package works on chart-defined Riemannian manifolds.  Metrics, vector
fields and moment maps are plain JAX-traceable callables, so every tensor is
obtained by forward-mode automatic differentiation; central finite
differences act as an independent oracle.
"""

import jax

jax.config.update("jax_enable_x64", True)

from .errors import (  # noqa: E402
    ChartOverlap,
    DegenerateFrame,
    DimensionTooSmall,
    DomainError,
    EmptyLevelSet,
    EvenDimension,
    ExpressionError,
    GeometryError,
    NoConvergence,
    NonFreeAction,
    ReebNotKilling,
    ReebNotUnit,
    SingularMetric,
)
from .geometry import Chart, ChartManifold, Jet  # noqa: E402
from .report import CheckReport  # noqa: E402
from .sasaki import SasakianData  # noqa: E402
from .cone import ConeManifold, build_cone  # noqa: E402
from .reduction import GroupAction, LevelSetPoint, SliceChart  # noqa: E402

__all__ = [
    "Chart",
    "ChartManifold",
    "ChartOverlap",
    "CheckReport",
    "ConeManifold",
    "DegenerateFrame",
    "DimensionTooSmall",
    "DomainError",
    "EmptyLevelSet",
    "EvenDimension",
    "ExpressionError",
    "GeometryError",
    "GroupAction",
    "Jet",
    "LevelSetPoint",
    "NoConvergence",
    "NonFreeAction",
    "ReebNotKilling",
    "ReebNotUnit",
    "SasakianData",
    "SingularMetric",
    "SliceChart",
    "build_cone",
]

__version__ = "0.1.0"
