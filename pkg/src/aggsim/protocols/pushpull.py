"""Push-Pull Gossip and its two atomic variants.

ORIGINAL answers every push immediately, even in the middle of its own
exchange, which lets a third-party push interleave between a node's push and
its awaited pull. BACK_CANCEL reflects such a push back unchanged so the
pusher's update becomes a no-op. ORDERED_WAIT buffers it until the running
exchange finishes, and only initiates toward higher ids so that waits can
never form a cycle.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from ..core import AggregateFunction, value_estimate
from .base import Protocol


class Variant(str, Enum):
    ORIGINAL = "ppg"
    BACK_CANCEL = "ppbc"
    ORDERED_WAIT = "ppow"


@dataclass(frozen=True, slots=True)
class Push:
    value: float
    xid: int


@dataclass(frozen=True, slots=True)
class Pull:
    value: float
    xid: int


@dataclass(slots=True)
class Pending:
    peer: int
    pushed: float
    timer: object = None


class PushPull(Protocol):
    def __init__(
        self,
        values: Sequence[float],
        fn: AggregateFunction,
        variant: Variant = Variant.ORIGINAL,
        timeout: Optional[float] = None,
    ):
        self.variant = Variant(variant)
        self.name = self.variant.value
        self.fn = fn
        self.timeout = timeout
        n = len(values)
        self.value = [float(v) for v in values]
        # xid -> Pending; BACK_CANCEL and ORDERED_WAIT hold at most one entry
        self.pending: list[dict[int, Pending]] = [{} for _ in range(n)]
        self.buffer: list[deque] = [deque() for _ in range(n)]
        self._higher: list[tuple[int, ...]] = []
        self._xids = itertools.count(1)
        self.stale_pulls = 0
        self.cancellations = 0
        self.timeouts = 0
        self.max_buffer = 0
        self._peak = 0

    def attach(self, sim) -> None:
        super().attach(sim)
        self._higher = [tuple(v for v in nbrs if v > u) for u, nbrs in enumerate(sim.topology.adjacency)]

    def busy(self, u: int) -> bool:
        return bool(self.pending[u])

    def on_tick(self, u: int, target: Optional[int] = None) -> None:
        if self.variant is not Variant.ORIGINAL and self.pending[u]:
            return
        cands = self._higher[u] if self.variant is Variant.ORDERED_WAIT else None
        v = self._pick(u, target, cands)
        if v is None:
            return
        xid = next(self._xids)
        entry = Pending(v, self.value[u])
        self.pending[u][xid] = entry
        if self.timeout is not None:
            entry.timer = self.sim.set_timeout(u, xid, self.timeout)
        self.sim.send(u, v, Push(self.value[u], xid))

    def on_message(self, u: int, env) -> None:
        if isinstance(env.payload, Push):
            self.on_push(u, env)
        else:
            self.on_pull(u, env)

    def _serve(self, u: int, env) -> None:
        # reply with the pre-update value, then average
        mine = self.value[u]
        self.sim.send(u, env.src, Pull(mine, env.payload.xid))
        self.value[u] = (mine + env.payload.value) / 2

    def on_push(self, u: int, env) -> None:
        if not self.pending[u] or self.variant is Variant.ORIGINAL:
            self._serve(u, env)
        elif self.variant is Variant.BACK_CANCEL:
            self.cancellations += 1
            self.sim.send(u, env.src, Pull(env.payload.value, env.payload.xid))
        else:
            buf = self.buffer[u]
            buf.append(env)
            if len(buf) > self._peak:
                self._peak = len(buf)
                self.max_buffer = max(self.max_buffer, self._peak)

    def on_pull(self, u: int, env) -> None:
        entry = self.pending[u].pop(env.payload.xid, None)
        if entry is None:
            self.stale_pulls += 1
            return
        if entry.timer is not None:
            entry.timer.cancel()
        self.value[u] = (self.value[u] + env.payload.value) / 2
        self._drain_buffer(u)

    def on_timeout(self, u: int, token) -> None:
        if self.pending[u].pop(token, None) is None:
            return
        self.timeouts += 1
        self._drain_buffer(u)

    def _drain_buffer(self, u: int) -> None:
        buf = self.buffer[u]
        while buf and not self.pending[u]:
            self._serve(u, buf.popleft())

    def on_crash(self, u: int) -> None:
        self.pending[u].clear()
        self.buffer[u].clear()

    def node_mass(self, u: int) -> tuple[float, float]:
        return (self.value[u], 0.0)

    def estimates(self) -> list[Optional[float]]:
        alive = self.sim.alive
        fn = self.fn
        return [value_estimate(self.value[u], fn) for u in range(len(self.value)) if alive[u]]

    def buffer_peak(self) -> int:
        """Largest buffer seen since the previous call."""
        peak = self._peak
        self._peak = max((len(b) for b in self.buffer), default=0)
        return peak

    def waits_for(self) -> list[tuple[int, int]]:
        """Edges initiator -> awaited responder for every open exchange."""
        return [(u, p.peer) for u, pend in enumerate(self.pending) for p in pend.values()]
