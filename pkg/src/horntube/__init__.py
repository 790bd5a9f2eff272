"""Webster's horn model in curved dissipative tubes with an averaging verification harness."""

from __future__ import annotations

from .geometry import TubeGeometry, arc_tube, cone, cylinder, validate
from .webster import SolverConfig, assemble, run

__all__ = ["TubeGeometry", "SolverConfig", "arc_tube", "assemble", "cone", "cylinder", "run", "validate"]
__version__ = "0.1.0"
