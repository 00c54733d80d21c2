"""Distributed Random Grouping with iteration ids.

An idle node becomes leader with probability ``p_leader`` per tick and calls
its neighbors (GCM). Idle neighbors join the first call they hear (JACK with
their value). When the collection timeout fires the leader averages its own
value with the collected ones and broadcasts the result (GAM) together with
the list of members it counted; only listed members adopt it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import AggregateFunction, value_estimate
from .base import Protocol

IDLE, LEADER, MEMBER = "idle", "leader", "member"


@dataclass(frozen=True, slots=True)
class Gcm:
    leader: int
    iteration: int


@dataclass(frozen=True, slots=True)
class Jack:
    member: int
    iteration: int
    value: float


@dataclass(frozen=True, slots=True)
class Gam:
    leader: int
    iteration: int
    result: float
    members: frozenset


class DrgNode:
    __slots__ = ("mode", "value", "iteration", "leader", "collected", "timer", "counter")

    def __init__(self, value: float):
        self.mode = IDLE
        self.value = value
        self.iteration = 0
        self.leader = -1
        self.collected: dict[int, float] = {}
        self.timer = None
        self.counter = 0


class RandomGrouping(Protocol):
    name = "drg"

    def __init__(
        self,
        values: Sequence[float],
        fn: AggregateFunction,
        p_leader: float = 0.1,
        jack_timeout: float = 2.0,
        gam_timeout: float = 4.0,
    ):
        self.fn = fn
        self.p_leader = p_leader
        self.jack_timeout = jack_timeout
        self.gam_timeout = gam_timeout
        self.nodes = [DrgNode(float(v)) for v in values]
        self.groups_formed = 0
        self.stale_jacks = 0
        self.member_timeouts = 0
        self.unlisted_gams = 0
        # (leader, group size, mass before, result) per finalized group
        self.group_log: list[tuple[int, int, float, float]] = []

    @property
    def value(self) -> list[float]:
        return [nd.value for nd in self.nodes]

    def on_tick(self, u: int, target: Optional[int] = None) -> None:
        nd = self.nodes[u]
        if nd.mode != IDLE:
            return
        if self.sim.rng.random() >= self.p_leader:
            return
        nd.counter += 1
        nd.mode = LEADER
        nd.iteration = nd.counter
        nd.collected = {}
        msg = Gcm(u, nd.iteration)
        for v in self.sim.topology.adjacency[u]:
            self.sim.send(u, v, msg)
        nd.timer = self.sim.set_timeout(u, ("jack", nd.iteration), self.jack_timeout)

    def on_message(self, u: int, env) -> None:
        msg = env.payload
        if isinstance(msg, Gcm):
            self.on_gcm(u, msg)
        elif isinstance(msg, Jack):
            self.on_jack(u, msg)
        else:
            self.on_gam(u, msg)

    def on_gcm(self, u: int, gcm: Gcm) -> None:
        nd = self.nodes[u]
        if nd.mode != IDLE:
            return
        nd.mode = MEMBER
        nd.leader = gcm.leader
        nd.iteration = gcm.iteration
        self.sim.send(u, gcm.leader, Jack(u, gcm.iteration, nd.value))
        nd.timer = self.sim.set_timeout(u, ("gam", gcm.leader, gcm.iteration), self.gam_timeout)

    def on_jack(self, u: int, jack: Jack) -> None:
        nd = self.nodes[u]
        if nd.mode == LEADER and jack.iteration == nd.iteration:
            nd.collected[jack.member] = jack.value
        else:
            self.stale_jacks += 1

    def on_timeout(self, u: int, token) -> None:
        nd = self.nodes[u]
        if token[0] == "jack":
            if nd.mode == LEADER and token[1] == nd.iteration:
                self.finalize(u)
        elif nd.mode == MEMBER and (nd.leader, nd.iteration) == token[1:]:
            self.member_timeouts += 1
            nd.mode = IDLE
            nd.timer = None

    def finalize(self, u: int) -> None:
        nd = self.nodes[u]
        vals = [nd.value, *nd.collected.values()]
        before = math.fsum(vals)
        result = before / len(vals)
        members = frozenset(nd.collected)
        self.group_log.append((u, len(vals), before, result))
        self.groups_formed += 1
        msg = Gam(u, nd.iteration, result, members)
        for v in self.sim.topology.adjacency[u]:
            self.sim.send(u, v, msg)
        nd.value = result
        nd.mode = IDLE
        nd.collected = {}
        nd.timer = None

    def on_gam(self, u: int, gam: Gam) -> None:
        nd = self.nodes[u]
        if nd.mode != MEMBER or nd.leader != gam.leader or nd.iteration != gam.iteration:
            return
        if u in gam.members:
            nd.value = gam.result
        else:
            self.unlisted_gams += 1
        nd.mode = IDLE
        if nd.timer is not None:
            nd.timer.cancel()
            nd.timer = None

    def on_crash(self, u: int) -> None:
        self.nodes[u].mode = IDLE

    def node_mass(self, u: int) -> tuple[float, float]:
        return (self.nodes[u].value, 0.0)

    def estimates(self) -> list[Optional[float]]:
        alive = self.sim.alive
        fn = self.fn
        return [value_estimate(nd.value, fn) for u, nd in enumerate(self.nodes) if alive[u]]
