"""lossforge: a loss-function laboratory for deep classifiers.

Twelve classification losses with hand-derived gradients, a minimal MLP
training engine, and a reproducible experiment harness for learning-speed
and noise-robustness studies.
"""

__version__ = "0.1.0"

from .losses import ALL_LOSS_IDS, LossEval, LossId, evaluate
from .rng import Rng

__all__ = ["ALL_LOSS_IDS", "LossEval", "LossId", "Rng", "evaluate", "__version__"]
