"""Monte Carlo laboratory for biased random walks on discrete cylinders."""
from .lattice import Adjacency, Geometry, Site, Space
from .rng import Stream
from .walkers import WalkConfig

__all__ = ["Adjacency", "Geometry", "Site", "Space", "Stream", "WalkConfig"]
__version__ = "0.1.0"
