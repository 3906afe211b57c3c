"""Directed interaction graphs for neighbor-based aggregation.

An edge (p, k) means client k receives parameters from client p. Neighbor
sets are derived from the edge set at construction and never mutate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

TOPOLOGY_KINDS = ("ring", "complete", "erdos-renyi")

_MAX_CONNECTIVITY_RETRIES = 64


@dataclass(frozen=True)
class Topology:
    """Immutable directed graph over clients 0..client_count-1."""

    client_count: int
    edges: frozenset

    def __post_init__(self):
        for p, k in self.edges:
            if p == k:
                raise ConfigurationError(f"self-loop ({p}, {k}) not allowed")
            if not (0 <= p < self.client_count and 0 <= k < self.client_count):
                raise ConfigurationError(f"edge ({p}, {k}) outside client range")

    def in_neighbors(self, k: int) -> tuple:
        """Open neighborhood: senders p with (p, k) in edges, excluding k."""
        return tuple(sorted(p for p, q in self.edges if q == k))

    def closed_neighborhood(self, k: int) -> tuple:
        return tuple(sorted(set(self.in_neighbors(k)) | {k}))

    def is_weakly_connected(self) -> bool:
        if self.client_count == 0:
            return False
        undirected = {i: set() for i in range(self.client_count)}
        for p, k in self.edges:
            undirected[p].add(k)
            undirected[k].add(p)
        seen = {0}
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for other in undirected[node]:
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        return len(seen) == self.client_count


def build_topology(kind: str, clients: int, p: float | None = None, seed=0,
                   require_connected: bool = True) -> Topology:
    """Construct a named topology deterministically.

    ring: every client receives from both cyclic neighbors. complete: from all
    others. erdos-renyi: each ordered pair is an edge independently with
    probability ``p``; resampled with derived seeds until weakly connected,
    bounded by a retry cap.
    """
    if clients < 2:
        raise ConfigurationError("topology needs at least 2 clients")
    if kind == "ring":
        edges = set()
        for k in range(clients):
            edges.add(((k - 1) % clients, k))
            edges.add(((k + 1) % clients, k))
        return Topology(clients, frozenset(edges))
    if kind == "complete":
        edges = {(q, k) for k in range(clients) for q in range(clients) if q != k}
        return Topology(clients, frozenset(edges))
    if kind == "erdos-renyi":
        if p is None or not (0.0 < p <= 1.0):
            raise ConfigurationError("erdos-renyi needs edge probability p in (0, 1]")
        for attempt in range(_MAX_CONNECTIVITY_RETRIES):
            rng = np.random.default_rng((seed, attempt))
            edges = {
                (q, k)
                for k in range(clients)
                for q in range(clients)
                if q != k and rng.random() < p
            }
            topo = Topology(clients, frozenset(edges))
            if not require_connected or topo.is_weakly_connected():
                return topo
        raise ConfigurationError(
            f"no weakly connected erdos-renyi({p}) draw for {clients} clients "
            f"after {_MAX_CONNECTIVITY_RETRIES} attempts"
        )
    raise ConfigurationError(f"unknown topology kind {kind!r}")


def edge_list_text(topology: Topology) -> str:
    """Edge list dump, one '"p k"' line per edge, clients numbered from 1."""
    lines = [f"{p + 1} {k + 1}" for p, k in sorted(topology.edges)]
    return "\n".join(lines) + "\n" if lines else ""
