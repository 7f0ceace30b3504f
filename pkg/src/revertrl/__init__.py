"""Deep-RL mean-reversion trading with function-penalty reward shaping."""
from .estimator import MeanReversionTrader

__all__ = ["MeanReversionTrader"]
__version__ = "0.1.0"
