"""Shared result types for the exact engines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..geometry import Coord, as_coord


class TruncationError(RuntimeError):
    """Raised when a truncation error estimate exceeds the requested tolerance."""


@dataclass(frozen=True)
class ExactValue:
    """Numerically exact scalar with truncation metadata.

    ``log_value`` is the primary representation for partition functions (sums
    of nonnegative terms); ``value`` is the plain float, which may underflow
    to 0.0 for very small quantities while ``log_value`` stays finite.
    """

    value: float
    log_value: float
    error_estimate: float  # relative
    truncation: dict = field(default_factory=dict)

    @staticmethod
    def from_log(log_value: float, error_estimate: float, truncation: dict) -> "ExactValue":
        v = math.exp(log_value) if log_value > -745 else 0.0
        return ExactValue(v, log_value, error_estimate, truncation)

    def to_record(self, operation: str, inputs: dict) -> dict:
        return {
            "operation": operation,
            "inputs": inputs,
            "value": self.value,
            "log_value": None if self.log_value == -math.inf else self.log_value,
            "error_estimate": self.error_estimate,
            "truncation": self.truncation,
        }


@dataclass(frozen=True)
class ChargeAssignment:
    """Integer spin-insertion exponents at a subset of vertices."""

    charges: dict[Coord, int]

    @staticmethod
    def of(pairs) -> "ChargeAssignment":
        charges = {}
        if hasattr(pairs, "items"):
            pairs = pairs.items()
        for p, q in pairs:
            if q:
                charges[as_coord(p)] = int(q)
        return ChargeAssignment(charges)

    @staticmethod
    def two_point(u, v) -> "ChargeAssignment":
        """Correlator sigma_u sigma-bar_v."""
        return ChargeAssignment.of({u: 1, v: -1})

    @property
    def total(self) -> int:
        return sum(self.charges.values())

    def get(self, p) -> int:
        return self.charges.get(as_coord(p), 0)

    def __bool__(self):
        return bool(self.charges)
