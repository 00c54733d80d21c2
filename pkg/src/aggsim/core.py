"""Shared domain types and aggregate initialization.

Two state representations exist. Mass-carrying protocols (push-sum) keep a
``(s, w)`` pair per node and read the estimate as ``s / w``. Single-value
protocols (the push-pull family and random grouping) keep one real per node
and, for COUNT, read the network size as ``1 / value``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

# Denominators below this make an estimate UNDEFINED.
EPSILON_W = 1e-12

UNDEFINED = None


class ConfigError(ValueError):
    """Raised for invalid simulation or experiment parameters."""


class Aggregate(str, Enum):
    AVERAGE = "average"
    SUM = "sum"
    COUNT = "count"


@dataclass(frozen=True)
class AggregateFunction:
    kind: Aggregate = Aggregate.COUNT
    distinguished: int = 0

    @classmethod
    def parse(cls, name: str, distinguished: int = 0) -> "AggregateFunction":
        try:
            kind = Aggregate(name.lower())
        except ValueError:
            valid = ", ".join(a.value for a in Aggregate)
            raise ConfigError(f"aggregate: unknown function {name!r} (valid: {valid})") from None
        return cls(kind, distinguished)


@dataclass
class MassPair:
    s: float = 0.0
    w: float = 0.0

    def __add__(self, other: "MassPair") -> "MassPair":
        return MassPair(self.s + other.s, self.w + other.w)

    def __iadd__(self, other: "MassPair") -> "MassPair":
        self.s += other.s
        self.w += other.w
        return self

    def halve(self) -> "MassPair":
        return MassPair(self.s / 2, self.w / 2)

    def as_tuple(self) -> tuple[float, float]:
        return (self.s, self.w)


def _check_inputs(fn: AggregateFunction, n: int, inputs: Optional[Sequence[float]]) -> list[float]:
    if n < 1:
        raise ConfigError("n: need at least one node")
    if not 0 <= fn.distinguished < n:
        raise ConfigError(f"distinguished_node: {fn.distinguished} not in [0, {n})")
    if fn.kind is Aggregate.COUNT:
        return [1.0] * n
    if inputs is None or len(inputs) != n:
        raise ConfigError(f"inputs: expected {n} values for {fn.kind.value}")
    values = [float(x) for x in inputs]
    if not all(math.isfinite(x) for x in values):
        raise ConfigError("inputs: non-finite value")
    return values


def init_mass_states(fn: AggregateFunction, n: int, inputs: Optional[Sequence[float]] = None) -> list[MassPair]:
    """Initial (s, w) pairs for push-sum."""
    xs = _check_inputs(fn, n, inputs)
    if fn.kind is Aggregate.AVERAGE:
        return [MassPair(x, 1.0) for x in xs]
    return [MassPair(x, 1.0 if i == fn.distinguished else 0.0) for i, x in enumerate(xs)]


def init_value_states(fn: AggregateFunction, n: int, inputs: Optional[Sequence[float]] = None) -> list[float]:
    """Initial values for single-value protocols.

    SUM is carried as AVERAGE scaled by n at readout time, which needs n; it is
    therefore only supported for mass-carrying protocols.
    """
    xs = _check_inputs(fn, n, inputs)
    if fn.kind is Aggregate.AVERAGE:
        return xs
    if fn.kind is Aggregate.COUNT:
        return [1.0 if i == fn.distinguished else 0.0 for i in range(n)]
    raise ConfigError("aggregate: sum is only available for push-sum (psp)")


def true_aggregate(fn: AggregateFunction, n: int, inputs: Optional[Sequence[float]] = None) -> float:
    xs = _check_inputs(fn, n, inputs)
    if fn.kind is Aggregate.COUNT:
        return float(n)
    if fn.kind is Aggregate.SUM:
        return math.fsum(xs)
    return math.fsum(xs) / n


def mass_estimate(s: float, w: float) -> Optional[float]:
    if w < EPSILON_W:
        return UNDEFINED
    return s / w


def value_estimate(value: float, fn: AggregateFunction) -> Optional[float]:
    if fn.kind is Aggregate.COUNT:
        if value < EPSILON_W:
            return UNDEFINED
        return 1.0 / value
    return value


def read_estimate(state, fn: AggregateFunction) -> Optional[float]:
    """Estimate held by one node; ``state`` is a MassPair or a plain value."""
    if isinstance(state, MassPair):
        return mass_estimate(state.s, state.w)
    return value_estimate(state, fn)
