"""Exact engines: current sums for the XY model, height sums for the dual."""

from .base import ChargeAssignment, ExactValue, TruncationError
from .flows import (
    choose_current_cutoff,
    flow_log_sum,
    xy_correlator,
    xy_partition,
    xy_two_point,
)

__all__ = [
    "ChargeAssignment",
    "ExactValue",
    "TruncationError",
    "choose_current_cutoff",
    "flow_log_sum",
    "xy_correlator",
    "xy_partition",
    "xy_two_point",
]
