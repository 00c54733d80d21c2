"""Error metrics, convergence detection and mass audits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

NO_DATA = None
NOT_REACHED = None


@dataclass(frozen=True)
class MetricsRow:
    time: float
    rmse: Optional[float]
    cv_rmse: Optional[float]
    mass_s: float
    mass_w: float
    messages_cum: int
    buffer_max: int
    nodes_alive: int


def rmse(estimates: Sequence[Optional[float]], truth: float) -> Optional[float]:
    """Root mean square error over live nodes; UNDEFINED estimates count as 0."""
    if not estimates:
        return NO_DATA
    sq = math.fsum(((0.0 if e is None else e) - truth) ** 2 for e in estimates)
    return math.sqrt(sq / len(estimates))


def cv_rmse(rmse_value: Optional[float], truth: float) -> Optional[float]:
    if rmse_value is None or truth == 0:
        return NO_DATA
    return rmse_value / abs(truth)


def time_to_accuracy(rows: Sequence[MetricsRow], eps: float) -> Optional[float]:
    """First time from which cv_rmse stays <= eps for every later row."""
    idx = sustained_index(rows, eps)
    return NOT_REACHED if idx is None else rows[idx].time


def sustained_index(rows: Sequence[MetricsRow], eps: float) -> Optional[int]:
    found = None
    for i in range(len(rows) - 1, -1, -1):
        cv = rows[i].cv_rmse
        if cv is None or cv > eps:
            break
        found = i
    return found


def messages_to_accuracy(rows: Sequence[MetricsRow], eps: float) -> Optional[int]:
    idx = sustained_index(rows, eps)
    return None if idx is None else rows[idx].messages_cum


def sample_row(sim, truth: float) -> MetricsRow:
    proto = sim.protocol
    err = rmse(proto.estimates(), truth)
    if proto.carries_mass:
        s, w = sim.node_mass_total()
        s += sim.ledger.inflight[0]
        w += sim.ledger.inflight[1]
    else:
        s, w = sim.node_mass_total()
    return MetricsRow(
        time=sim.now,
        rmse=err,
        cv_rmse=cv_rmse(err, truth),
        mass_s=s,
        mass_w=w,
        messages_cum=sim.messages_sent,
        buffer_max=proto.buffer_peak(),
        nodes_alive=sim.n_alive,
    )


@dataclass(frozen=True)
class AuditReport:
    node_mass: tuple[float, float]
    inflight: tuple[float, float]
    lost: tuple[float, float]
    initial: tuple[float, float]
    drained: bool

    @property
    def total(self) -> tuple[float, float]:
        return tuple(a + b + c for a, b, c in zip(self.node_mass, self.inflight, self.lost))

    @property
    def abs_deviation(self) -> float:
        return max(abs(t - i) for t, i in zip(self.total, self.initial))

    @property
    def rel_deviation(self) -> float:
        return max(abs(t - i) / max(abs(i), 1e-300) if i else abs(t) for t, i in zip(self.total, self.initial))


def audit(sim, drained: bool = False) -> AuditReport:
    return AuditReport(
        node_mass=sim.node_mass_total(),
        inflight=tuple(sim.ledger.inflight),
        lost=tuple(sim.ledger.lost),
        initial=tuple(sim.ledger.initial),
        drained=drained,
    )


def drain_and_audit(sim, max_periods: int = 100_000) -> AuditReport:
    """Quiesce the simulation, then compare held + lost mass to the start.

    For push-pull and grouping protocols nothing is booked in flight, so the
    report exposes any mass created or destroyed by the protocol itself.
    """
    ok = sim.drain(max_periods)
    return audit(sim, drained=ok)
