"""Utility-based link recommendation for temporal social networks."""

__version__ = "0.1.0"

from .errors import LinkUtilError  # noqa: F401
from .features import CostConfig, FeatureRecord, ValueConfig  # noqa: F401
from .graph import GraphSnapshot, TemporalGraph, snapshot  # noqa: F401
from .model import Theta  # noqa: F401
from .proximity import KatzConfig, ProfileStore  # noqa: F401
