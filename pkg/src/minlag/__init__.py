"""Discrete minimal Lagrangian patches with boundary on a scaffold."""

from .errors import MinlagError
from .generators import generate_mesh
from .mesh import SimplicialPatch, boundary_data, load_mesh, save_mesh

__version__ = "0.1.0"

__all__ = ["MinlagError", "SimplicialPatch", "boundary_data", "generate_mesh", "load_mesh", "save_mesh"]
