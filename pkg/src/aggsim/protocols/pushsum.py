"""Push-Sum: every tick a node keeps half of its (s, w) and ships the other half."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import ConfigError, MassPair, mass_estimate
from .base import Protocol


@dataclass(frozen=True, slots=True)
class PspShare:
    s: float
    w: float


class PushSum(Protocol):
    name = "psp"
    carries_mass = True

    def __init__(self, states: Sequence[MassPair]):
        self.s = [m.s for m in states]
        self.w = [m.w for m in states]

    def state(self, u: int) -> MassPair:
        return MassPair(self.s[u], self.w[u])

    def on_tick(self, u: int, target: Optional[int] = None) -> None:
        v = self._pick(u, target)
        if v is None:
            return
        hs, hw = self.s[u] / 2, self.w[u] / 2
        self.s[u], self.w[u] = hs, hw
        self.sim.send(u, v, PspShare(hs, hw))

    def on_message(self, u: int, env) -> None:
        share = env.payload
        self.s[u] += share.s
        self.w[u] += share.w

    def on_send_lost(self, u: int, env) -> None:
        """Oracle loss detection: the sender takes back the exact lost share."""
        if not self.sim.oracle_loss_recovery:
            raise ConfigError("oracle_loss_recovery: loss re-credit used outside oracle mode")
        share = env.payload
        self.s[u] += share.s
        self.w[u] += share.w

    def on_crash(self, u: int) -> None:
        self.s[u] = self.w[u] = 0.0

    def node_mass(self, u: int) -> tuple[float, float]:
        return (self.s[u], self.w[u])

    def payload_mass(self, payload) -> Optional[tuple[float, float]]:
        return (payload.s, payload.w)

    def estimates(self) -> list[Optional[float]]:
        alive = self.sim.alive
        return [mass_estimate(self.s[u], self.w[u]) for u in range(len(self.s)) if alive[u]]
