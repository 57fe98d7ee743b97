"""Spatial SEIR simulation, kernel fitting and latent model criticism."""

from ._kernelcrit import *  # noqa: F401,F403
from ._kernelcrit import __all__  # noqa: F401
