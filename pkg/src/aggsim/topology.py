"""Erdős–Rényi topologies and neighbor sampling."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigError


@dataclass(frozen=True)
class Topology:
    n: int
    adjacency: tuple[tuple[int, ...], ...]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    def mean_degree(self) -> float:
        return 2 * self.edge_count / self.n if self.n else 0.0

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in enumerate(self.adjacency) for v in nbrs if u < v]

    def validate(self) -> None:
        for u, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError(f"adjacency of {u} not sorted/unique")
            for v in nbrs:
                if not 0 <= v < self.n:
                    raise ValueError(f"edge {u}-{v} out of range")
                if v == u:
                    raise ValueError(f"self-loop at {u}")
                if u not in self.adjacency[v]:
                    raise ValueError(f"edge {u}-{v} not symmetric")

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[tuple[int, int]]) -> "Topology":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs))

    @classmethod
    def complete(cls, n: int) -> "Topology":
        return cls(n, tuple(tuple(v for v in range(n) if v != u) for u in range(n)))


def edge_probability(n: int, avg_degree: float) -> float:
    return avg_degree / (n - 1)


def generate_erdos_renyi(n: int, avg_degree: float, rng: np.random.Generator) -> Topology:
    """G(n, p) with p = avg_degree / (n - 1); one uniform draw per unordered pair."""
    if n < 2:
        raise ConfigError("n: Erdős–Rényi topology needs at least 2 nodes")
    if not 0 < avg_degree < n:
        raise ConfigError(f"avg_degree: must lie in (0, {n}), got {avg_degree}")
    p = edge_probability(n, avg_degree)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    nbrs: list[list[int]] = [[] for _ in range(n)]
    # triu_indices is row-major, so both lists come out sorted
    for u, v in zip(iu[keep].tolist(), ju[keep].tolist()):
        nbrs[u].append(v)
    for u in range(n):
        for v in nbrs[u]:
            if v > u:
                nbrs[v].append(u)
    return Topology(n, tuple(tuple(sorted(a)) for a in nbrs))


def largest_connected_component(t: Topology) -> set[int]:
    seen = [False] * t.n
    best: list[int] = []
    for root in range(t.n):
        if seen[root]:
            continue
        seen[root] = True
        comp = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in t.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        if len(comp) > len(best):
            best = comp
    return set(best)


def induced_subgraph(t: Topology, nodes: set[int]) -> tuple[Topology, list[int]]:
    """Relabel ``nodes`` to 0..k-1 in increasing original order.

    Returns the subgraph and the list mapping new id -> original id.
    """
    order = sorted(nodes)
    index = {u: i for i, u in enumerate(order)}
    adj = tuple(tuple(index[v] for v in t.adjacency[u] if v in index) for u in order)
    return Topology(len(order), adj), order


def sample_neighbor(
    t: Topology,
    u: int,
    rng: random.Random,
    filter: Optional[Callable[[int], bool]] = None,
) -> Optional[int]:
    cands = t.adjacency[u] if filter is None else [v for v in t.adjacency[u] if filter(v)]
    if not cands:
        return None
    return cands[int(rng.random() * len(cands))]


def write_topology(t: Topology, path, seed: Optional[int] = None) -> None:
    lines = [f"# n={t.n} seed={seed if seed is not None else ''}"]
    lines += [f"{u} {v}" for u, v in t.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_topology(path) -> Topology:
    text = Path(path).read_text().splitlines()
    header = text[0]
    if not header.startswith("# n="):
        raise ValueError(f"{path}: missing '# n=<n> seed=<seed>' header")
    n = int(header.split()[1].split("=")[1])
    edges = [tuple(int(x) for x in line.split()) for line in text[1:] if line.strip()]
    return Topology.from_edges(n, edges)
