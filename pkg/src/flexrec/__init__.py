"""Evidential modelling of confusion and ignorance for flexible recognition."""

from .kernels import BACKEND
from .sl_core import HyperOpinion, hyper_opinion

__version__ = "0.1.0"

__all__ = ["BACKEND", "HyperOpinion", "hyper_opinion", "__version__"]
