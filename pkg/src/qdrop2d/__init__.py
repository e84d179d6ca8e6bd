"""Stationary states, stability and dynamics of 2D quantum droplets in a PT-symmetric trap."""
from .grid import Grid2, make_grid
from .potential import ModelParams, build_pt_hog, exact_droplet, exact_params

__version__ = "0.1.0"

__all__ = ["Grid2", "make_grid", "ModelParams", "build_pt_hog", "exact_droplet", "exact_params",
           "__version__"]
