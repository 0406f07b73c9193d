"""Exact null-to-target control of 1D semilinear heat equations via flat outputs."""

from .errors import HeatreachError
from .seriescore import AnalyticNonlinearity, BivariateJet, SpatialJet, TimeJetPair

__all__ = ["AnalyticNonlinearity", "BivariateJet", "HeatreachError", "SpatialJet", "TimeJetPair"]
__version__ = "0.1.0"
