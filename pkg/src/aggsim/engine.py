"""Deterministic discrete-event engine.

Two clock modes share one transport and one handler interface:

* SYNC: lock-step rounds. Everything sent in round t is delivered in round
  t + 1. A round applies scheduled crashes, then processes the round's
  deliveries and one tick per live node. With ``sync_order="interleaved"``
  (default) deliveries and ticks form one shuffled sequence; ``"phased"``
  runs shuffled deliveries, due timeouts, then shuffled ticks. Timeouts fire
  after the deliveries of their round in both orders.
* ASYNC: each node ticks with period 1.0 from a random phase; envelopes take
  a delay drawn uniformly from [d_min, d_max], optionally pushed later to keep
  per-channel FIFO order.

Loss is decided when an envelope is sent. Crash-stop destroys the victim's
state and every envelope still addressed to it. The MassLedger books node,
in-flight and lost mass so that their total stays constant for protocols whose
payloads carry mass.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional

from .core import ConfigError
from .topology import Topology

logger = logging.getLogger(__name__)

# Gap inserted between FIFO-adjusted deliveries on one channel.
TIE_EPSILON = 1e-9

# Event classes; at equal timestamps lower classes go first, matching the
# phase order of a synchronous round.
CRASH, DELIVER, TIMEOUT, TICK = 0, 1, 2, 3


class Mode(str, Enum):
    SYNC = "sync"
    ASYNC = "async"


@dataclass(slots=True)
class Envelope:
    src: int
    dst: int
    payload: Any
    send_time: float
    deliver_time: float
    channel_seq: int
    lost: bool = False


@dataclass(slots=True)
class Timer:
    node: int
    token: Any
    due: float
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass
class FaultPlan:
    loss_prob: float = 0.0
    fifo: bool = True
    crash_schedule: list[tuple[float, int]] = field(default_factory=list)
    # Scripted loss for targeted traces; returns True to drop an envelope.
    drop_rule: Optional[Callable[[Envelope], bool]] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss_prob: must lie in [0, 1], got {self.loss_prob}")

    @property
    def fault_free(self) -> bool:
        return self.loss_prob == 0.0 and not self.crash_schedule and self.drop_rule is None


class MassLedger:
    """Component-wise (s, w) bookkeeping: node + in-flight + lost = initial."""

    def __init__(self, initial: tuple[float, float]):
        self.initial = initial
        self.inflight = [0.0, 0.0]
        self.lost = [0.0, 0.0]
        self.recovered = [0.0, 0.0]

    def _add(self, acc: list[float], m: tuple[float, float], sign: float = 1.0) -> None:
        acc[0] += sign * m[0]
        acc[1] += sign * m[1]

    def sent(self, m) -> None:
        self._add(self.inflight, m)

    def delivered(self, m) -> None:
        self._add(self.inflight, m, -1.0)

    def lost_in_flight(self, m) -> None:
        self._add(self.inflight, m, -1.0)
        self._add(self.lost, m)

    def lost_at_node(self, m) -> None:
        self._add(self.lost, m)

    def recover(self, m) -> None:
        self._add(self.lost, m, -1.0)
        self._add(self.recovered, m)


@dataclass
class RoundReport:
    time: float
    deliveries: int = 0
    sends: int = 0
    losses: int = 0
    timeouts: int = 0
    ticks: int = 0
    crashes: int = 0


class Simulator:
    """One trial: a topology, a protocol instance and a fault plan.

    The protocol object provides ``attach(sim)``, ``on_tick(u)``,
    ``on_message(u, env)``, ``on_timeout(u, token)``, ``node_mass(u)`` and
    ``payload_mass(payload)`` (None for payloads that carry no mass).
    """

    def __init__(
        self,
        topology: Topology,
        protocol,
        *,
        mode: Mode = Mode.SYNC,
        faults: Optional[FaultPlan] = None,
        d_min: float = 0.1,
        d_max: float = 2.0,
        rng: Optional[random.Random] = None,
        seed: int = 0,
        oracle_loss_recovery: bool = False,
        audit_every_event: bool = False,
        audit_tol: float = 1e-9,
        initial_phases: Optional[list[float]] = None,
        sync_order: str = "interleaved",
    ):
        self.mode = Mode(mode)
        if self.mode is Mode.ASYNC:
            if not d_min > 0:
                raise ConfigError(f"d_min: must be > 0, got {d_min}")
            if d_max < d_min:
                raise ConfigError(f"d_max: must be >= d_min ({d_min}), got {d_max}")
        self.topology = topology
        self.n = topology.n
        self.protocol = protocol
        self.faults = faults or FaultPlan()
        self.d_min, self.d_max = d_min, d_max
        self.rng = rng if rng is not None else random.Random(seed)
        self.oracle_loss_recovery = oracle_loss_recovery
        self.audit_every_event = audit_every_event
        self.audit_tol = audit_tol
        if sync_order not in ("interleaved", "phased"):
            raise ConfigError(f"sync_order: unknown value {sync_order!r} (valid: interleaved, phased)")
        self.sync_order = sync_order

        self.now: float = 0.0
        self.alive = [True] * self.n
        self.n_alive = self.n
        self.draining = False
        self.messages_sent = 0
        self.messages_delivered = 0
        self.messages_lost = 0
        self.crash_warnings = 0
        self.events_processed = 0
        self._channel_seq: dict[tuple[int, int], int] = {}
        self._channel_last: dict[tuple[int, int], float] = {}
        self._counter = 0

        # sync state
        self._inflight: list[Envelope] = []
        self._timers_by_round: dict[int, list[Timer]] = {}
        # async state
        self._heap: list[tuple] = []
        self._pending_deliveries = 0
        self._pending_timers = 0

        self._crashes = sorted(self.faults.crash_schedule)
        for _, node in self._crashes:
            if not 0 <= node < self.n:
                raise ConfigError(f"crash_spec: node {node} not in [0, {self.n})")

        self._sync = self.mode is Mode.SYNC
        self._mass_of = protocol.payload_mass if protocol.carries_mass else None
        # no random loss and no scripted drops: only dead destinations lose
        self._clean_transport = self.faults.loss_prob == 0.0 and self.faults.drop_rule is None
        protocol.attach(self)
        self.ledger = MassLedger(self.node_mass_total())

        if self.mode is Mode.ASYNC:
            phases = initial_phases or [self.rng.random() for _ in range(self.n)]
            for u in range(self.n):
                self._push(phases[u], TICK, 0, u, ("tick", u))
            for t, node in self._crashes:
                self._push(t, CRASH, 0, node, ("crash", node))

    # ------------------------------------------------------------------ transport

    def send(self, src: int, dst: int, payload) -> Envelope:
        key = src * self.n + dst
        seq = self._channel_seq.get(key, 0) + 1
        self._channel_seq[key] = seq
        if self._sync:
            due = int(self.now) + 1
        else:
            due = self.now + self.rng.uniform(self.d_min, self.d_max)
            if self.faults.fifo:
                last = self._channel_last.get(key)
                if last is not None and due <= last:
                    due = last + TIE_EPSILON
                self._channel_last[key] = due
        env = Envelope(src, dst, payload, self.now, due, seq)
        self.messages_sent += 1
        if self._mass_of is not None:
            self.ledger.sent(self._mass_of(payload))
        if self._clean_transport and self.alive[dst]:
            ok = True
        else:
            ok = self.transmit(env)
        if ok:
            if self._sync:
                self._inflight.append(env)
            else:
                self._pending_deliveries += 1
                self._push(due, DELIVER, seq, dst, env)
        return env

    def transmit(self, env: Envelope) -> bool:
        """Apply the fault plan; False means the envelope is LOST."""
        plan = self.faults
        drop = not self.alive[env.dst]
        if not drop and plan.loss_prob > 0.0:
            drop = plan.loss_prob >= 1.0 or self.rng.random() < plan.loss_prob
        if not drop and plan.drop_rule is not None:
            drop = bool(plan.drop_rule(env))
        if drop:
            self._lose(env)
        return not drop

    def _lose(self, env: Envelope) -> None:
        env.lost = True
        self.messages_lost += 1
        mass = self.protocol.payload_mass(env.payload)
        if mass is not None:
            self.ledger.lost_in_flight(mass)
            if self.oracle_loss_recovery and self.alive[env.src]:
                self.protocol.on_send_lost(env.src, env)
                self.ledger.recover(mass)

    def set_timeout(self, node: int, token, delay: float) -> Timer:
        if self.mode is Mode.SYNC:
            due = math.floor(self.now) + max(1, int(math.ceil(delay)))
            timer = Timer(node, token, due)
            self._timers_by_round.setdefault(due, []).append(timer)
        else:
            timer = Timer(node, token, self.now + delay)
            self._pending_timers += 1
            self._push(timer.due, TIMEOUT, 0, node, timer)
        return timer

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.topology.adjacency[u]

    # ------------------------------------------------------------------ faults

    def crash(self, node: int) -> None:
        if not self.alive[node]:
            self.crash_warnings += 1
            logger.warning("node %d crashed twice at t=%s", node, self.now)
            return
        mass = self.protocol.node_mass(node)
        self.alive[node] = False
        self.n_alive -= 1
        self.ledger.lost_at_node(mass)
        if self.mode is Mode.SYNC:
            keep = []
            for env in self._inflight:
                if env.dst == node:
                    self._lose(env)
                else:
                    keep.append(env)
            self._inflight = keep
        else:
            for entry in self._heap:
                env = entry[-1]
                if entry[1] == DELIVER and env.dst == node and not env.lost:
                    self._lose(env)
        self.protocol.on_crash(node)

    # ------------------------------------------------------------------ sync mode

    def run_round(self) -> RoundReport:
        if self.mode is not Mode.SYNC:
            raise ConfigError("mode: run_round needs sync mode")
        self.now = t = int(self.now) + 1
        report = RoundReport(time=t)
        sent0, lost0 = self.messages_sent, self.messages_lost

        while self._crashes and self._crashes[0][0] <= t:
            _, node = self._crashes.pop(0)
            self.crash(node)
            report.crashes += 1

        batch, self._inflight = self._inflight, []
        ticking = [] if self.draining else [u for u in range(self.n) if self.alive[u]]
        report.ticks = len(ticking)
        if self.sync_order == "phased":
            self.rng.shuffle(batch)
            self.rng.shuffle(ticking)
            self._run_work(batch, report)
            self._fire_due(t, report)
            self._run_work(ticking, report)
        else:
            work = batch + ticking
            self.rng.shuffle(work)
            self._run_work(work, report)
            self._fire_due(t, report)

        report.sends = self.messages_sent - sent0
        report.losses = self.messages_lost - lost0
        return report

    def _run_work(self, work: list, report: RoundReport) -> None:
        alive = self.alive
        on_tick = self.protocol.on_tick
        audit = self.audit_every_event
        delivered = 0
        for item in work:
            if type(item) is int:
                if alive[item]:
                    on_tick(item)
                    self.events_processed += 1
                    if audit:
                        self.check_ledger()
            elif not item.lost:
                self._deliver(item)
                delivered += 1
        report.deliveries += delivered

    def _fire_due(self, t: int, report: RoundReport) -> None:
        for timer in self._timers_by_round.pop(t, ()):
            if timer.cancelled or not self.alive[timer.node]:
                continue
            self._fire(timer)
            report.timeouts += 1

    def _deliver(self, env: Envelope) -> None:
        self.messages_delivered += 1
        if self._mass_of is not None:
            self.ledger.delivered(self._mass_of(env.payload))
        self.protocol.on_message(env.dst, env)
        self.events_processed += 1
        if self.audit_every_event:
            self.check_ledger()

    def _fire(self, timer: Timer) -> None:
        timer.cancelled = True
        self.protocol.on_timeout(timer.node, timer.token)
        self._after_event()

    def _after_event(self) -> None:
        self.events_processed += 1
        if self.audit_every_event:
            self.check_ledger()

    # ------------------------------------------------------------------ async mode

    def _push(self, time: float, cls: int, k1: int, k2: int, item) -> None:
        self._counter += 1
        heapq.heappush(self._heap, (time, cls, k1, k2, self._counter, item))

    def run_until(self, t_end: float) -> int:
        """Process every async event with timestamp <= t_end."""
        if self.mode is not Mode.ASYNC:
            raise ConfigError("mode: run_until needs async mode")
        processed = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            if self.draining and self._pending_deliveries == 0 and self._pending_timers == 0:
                break
            time, cls, _, node, _, item = heapq.heappop(heap)
            self.now = time
            processed += 1
            if cls == DELIVER:
                self._pending_deliveries -= 1
                if not item.lost:
                    self._deliver(item)
            elif cls == TIMEOUT:
                self._pending_timers -= 1
                if not item.cancelled and self.alive[node]:
                    self._fire(item)
            elif cls == TICK:
                if not self.alive[node]:
                    continue
                self._push(time + 1.0, TICK, 0, node, item)
                if not self.draining:
                    self.protocol.on_tick(node)
                    self._after_event()
            else:
                self.crash(node)
        if math.isfinite(t_end) and not self.draining:
            self.now = max(self.now, t_end)
        return processed

    # ------------------------------------------------------------------ common

    def step(self, until: Optional[float] = None) -> None:
        """Advance one sampling period (one round, or one tick-period)."""
        if self.mode is Mode.SYNC:
            self.run_round()
        else:
            self.run_until(until if until is not None else math.floor(self.now) + 1.0)

    def quiescent(self) -> bool:
        if self.mode is Mode.SYNC:
            pending_timer = any(
                not tm.cancelled and self.alive[tm.node]
                for timers in self._timers_by_round.values()
                for tm in timers
            )
            return not self._inflight and not pending_timer
        return self._pending_deliveries == 0 and self._pending_timers == 0

    def drain(self, max_periods: int = 100_000) -> bool:
        """Stop initiations and run until nothing is in flight or pending.

        Returns False if ``max_periods`` elapsed first.
        """
        self.draining = True
        for _ in range(max_periods):
            if self.quiescent():
                return True
            if self.mode is Mode.SYNC:
                self.run_round()
            else:
                self.run_until(math.inf)
        return self.quiescent()

    def resume(self) -> None:
        self.draining = False

    def in_flight(self) -> list[Envelope]:
        if self.mode is Mode.SYNC:
            return [e for e in self._inflight if not e.lost]
        return [e[-1] for e in sorted(self._heap) if e[1] == DELIVER and not e[-1].lost]

    # scripted control, used to force specific interleavings

    def fire_tick(self, u: int, **kwargs) -> None:
        self.protocol.on_tick(u, **kwargs)
        self._after_event()

    def deliver(self, env: Envelope) -> None:
        """Deliver one specific in-flight envelope right now."""
        if self.mode is Mode.SYNC:
            self._inflight.remove(env)
        else:
            for i, entry in enumerate(self._heap):
                if entry[-1] is env:
                    self._heap[i] = self._heap[-1]
                    self._heap.pop()
                    heapq.heapify(self._heap)
                    self._pending_deliveries -= 1
                    break
            else:
                raise ValueError("envelope not in flight")
        if not env.lost:
            self._deliver(env)

    def drop(self, env: Envelope) -> None:
        """Lose one specific in-flight envelope."""
        if self.mode is Mode.SYNC:
            self._inflight.remove(env)
        else:
            env_entry = next(e for e in self._heap if e[-1] is env)
            self._heap.remove(env_entry)
            heapq.heapify(self._heap)
            self._pending_deliveries -= 1
        self._lose(env)

    def node_mass_total(self) -> tuple[float, float]:
        s = w = 0.0
        mass = self.protocol.node_mass
        for u in range(self.n):
            if self.alive[u]:
                ms, mw = mass(u)
                s += ms
                w += mw
        return (s, w)

    def ledger_totals(self) -> tuple[float, float]:
        s, w = self.node_mass_total()
        inf, lost = self.ledger.inflight, self.ledger.lost
        return (s + inf[0] + lost[0], w + inf[1] + lost[1])

    def ledger_deviation(self) -> float:
        """Largest relative component deviation of the ledger identity."""
        total = self.ledger_totals()
        dev = 0.0
        for got, want in zip(total, self.ledger.initial):
            dev = max(dev, abs(got - want) / max(abs(want), 1.0))
        return dev

    def check_ledger(self) -> None:
        if not self.protocol.carries_mass:
            return
        dev = self.ledger_deviation()
        if dev > self.audit_tol:
            raise AssertionError(f"mass ledger broken at t={self.now}: relative deviation {dev:.3e}")

    def live_nodes(self) -> Iterable[int]:
        return (u for u in range(self.n) if self.alive[u])
