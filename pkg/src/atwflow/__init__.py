"""Anisotropic mean curvature flow by discrete minimizing movements."""

from .anisotropy import Anisotropy
from .oracles import OracleSolution, oracle_for

__version__ = "0.1.0"
