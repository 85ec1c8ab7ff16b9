"""Streaming sufficient statistics: one pass over the rows, then means,
covariance, correlation and PCA from the stored summaries alone."""

__version__ = "0.1.0"

from .schema import Chunk, DatasetSchema  # noqa: E402
from .reduce import PrecisionMode, ReductionPlan, plan_partitions  # noqa: E402
from .suffstats import SuffStats, CoMoments, load_suffstats, save_suffstats  # noqa: E402

__all__ = [
    "__version__", "Chunk", "DatasetSchema", "PrecisionMode", "ReductionPlan",
    "plan_partitions", "SuffStats", "CoMoments", "load_suffstats", "save_suffstats",
]
