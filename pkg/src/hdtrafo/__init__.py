"""Inference on the transformation parameter of high-dimensional transformation models."""

__version__ = "0.1.0"

from .exceptions import *  # noqa: E402,F401,F403
from .transform import TransformationFamily, box_cox, yeo_johnson, get_family  # noqa: E402,F401
from .lasso import LassoConfig, WeightedLasso  # noqa: E402,F401
from .io import Dataset, read_csv  # noqa: E402,F401
from .estimator import SolverConfig, TransformationModel, estimate, solve  # noqa: E402,F401
