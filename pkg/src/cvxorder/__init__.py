"""Testing convex order between two samples with a Wasserstein projection statistic."""

from .errors import CvxOrderError, InvalidInput, SolverFailure
from .hypothesis import BoundedSupport, LogSobolev, TestReport, critical_value, p_value_bound, rate_bound, run_test
from .measure import DiscreteMeasure, empirical_from_samples, new_discrete, read_csv, write_csv
from .order_oracle import is_convex_order
from .projection import ProjectionResult, SolverConfig, project_backward, projection_distance
from .transport import sinkhorn, transport_simplex, w2_exact

__version__ = "0.1.0"

__all__ = [
    "BoundedSupport",
    "CvxOrderError",
    "DiscreteMeasure",
    "InvalidInput",
    "LogSobolev",
    "ProjectionResult",
    "SolverConfig",
    "SolverFailure",
    "TestReport",
    "critical_value",
    "empirical_from_samples",
    "is_convex_order",
    "new_discrete",
    "p_value_bound",
    "project_backward",
    "projection_distance",
    "rate_bound",
    "read_csv",
    "run_test",
    "sinkhorn",
    "transport_simplex",
    "w2_exact",
    "write_csv",
]
