"""Training-framework bridge over the fgbg recombination engine."""

from .dataset import DatasetHandle
from .demo import demo_background_robustness

__all__ = ["DatasetHandle", "demo_background_robustness"]
