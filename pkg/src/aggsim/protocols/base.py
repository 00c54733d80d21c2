from __future__ import annotations

from typing import Optional


class Protocol:
    """Handler set driven by a Simulator. One instance per trial."""

    name = "base"
    carries_mass = False

    def attach(self, sim) -> None:
        self.sim = sim

    def on_tick(self, u: int, target: Optional[int] = None) -> None:
        raise NotImplementedError

    def on_message(self, u: int, env) -> None:
        raise NotImplementedError

    def on_timeout(self, u: int, token) -> None:
        pass

    def on_crash(self, u: int) -> None:
        pass

    def on_send_lost(self, u: int, env) -> None:
        from ..core import ConfigError

        raise ConfigError(f"oracle_loss_recovery: not supported by {self.name}")

    def node_mass(self, u: int) -> tuple[float, float]:
        raise NotImplementedError

    def payload_mass(self, payload) -> Optional[tuple[float, float]]:
        return None

    def estimates(self) -> list[Optional[float]]:
        """Current estimate at every live node, in node order."""
        raise NotImplementedError

    def buffer_peak(self) -> int:
        return 0

    def _pick(self, u: int, target: Optional[int], candidates=None) -> Optional[int]:
        if target is not None:
            return target
        cands = self.sim.topology.adjacency[u] if candidates is None else candidates
        if not cands:
            return None
        return cands[int(self.sim.rng.random() * len(cands))]
