"""Adaptive iterative hard thresholding for sparse linear regression."""
from .adaptive import *  # noqa: F401,F403
from .baselines import *  # noqa: F401,F403
from .engine import *  # noqa: F401,F403
from .estimators import *  # noqa: F401,F403
from .experiments import *  # noqa: F401,F403
from .exceptions import (ConfigError, DesignParseError, DimensionError, EnumerationBudgetError,
                         SingularSupportError)
from .model import *  # noqa: F401,F403
from .rip import *  # noqa: F401,F403
from .sharp import *  # noqa: F401,F403
from .thresholding import *  # noqa: F401,F403

__version__ = "0.1.0"
