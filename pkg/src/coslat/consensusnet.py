"""Simulated round-based sensor communication and average consensus.

Communication is synchronous and lossless over the undirected per-step graph.
Each consensus round reads only the previous round's values (double buffered),
so results do not depend on node evaluation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class TopologyViolationError(Exception):
    """A payload was addressed to a node outside the sender's neighborhood."""


@dataclass(frozen=True)
class CommGraph:
    """Undirected communication graph over sensor ids (no self-loops)."""

    nodes: tuple
    edges: frozenset  # of frozenset({k, l}) pairs

    @classmethod
    def from_edges(cls, nodes, edge_pairs) -> "CommGraph":
        nodes = tuple(sorted(nodes))
        known = set(nodes)
        edges = set()
        for k, l in edge_pairs:
            if k == l:
                raise ValueError("self-loops are not allowed")
            if k not in known or l not in known:
                raise ValueError(f"edge ({k}, {l}) references unknown node")
            edges.add(frozenset((k, l)))
        return cls(nodes, frozenset(edges))

    @classmethod
    def from_positions(cls, positions: dict, comm_range: float) -> "CommGraph":
        ids = sorted(positions)
        pairs = []
        for i, k in enumerate(ids):
            for l in ids[i + 1:]:
                d = np.linalg.norm(np.asarray(positions[k]) - np.asarray(positions[l]))
                if d <= comm_range:
                    pairs.append((k, l))
        return cls.from_edges(ids, pairs)

    def neighbors(self, k) -> tuple:
        return tuple(sorted(l for e in self.edges if k in e for l in e if l != k))

    def degree(self, k) -> int:
        return sum(1 for e in self.edges if k in e)

    def has_edge(self, k, l) -> bool:
        return frozenset((k, l)) in self.edges

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        frontier = [self.nodes[0]]
        while frontier:
            k = frontier.pop()
            for l in self.neighbors(k):
                if l not in seen:
                    seen.add(l)
                    frontier.append(l)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class ConsensusConfig:
    iterations: int = 5
    rule: str = "metropolis"  # or "max-degree"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("consensus iterations must be >= 0")
        if self.rule not in ("metropolis", "max-degree"):
            raise ValueError(f"unknown weight rule {self.rule!r}")


def edge_weights(graph: CommGraph, rule: str = "metropolis") -> dict:
    """Symmetric averaging weight for each edge."""
    if rule == "metropolis":
        return {
            e: 1.0 / (1.0 + max(graph.degree(k) for k in e))
            for e in graph.edges
        }
    if rule == "max-degree":
        dmax = max((graph.degree(k) for k in graph.nodes), default=0)
        return {e: 1.0 / (dmax + 1.0) for e in graph.edges}
    raise ValueError(f"unknown weight rule {rule!r}")


def mailbox_exchange(graph: CommGraph, outgoing: dict) -> dict:
    """Deliver neighbor-addressed payloads within one round.

    `outgoing[k]` maps destination -> payload.  Returns `inbox[k]` mapping
    sender -> payload.  Sends to non-neighbors raise TopologyViolationError.
    """
    inbox = {k: {} for k in graph.nodes}
    for sender, payloads in outgoing.items():
        for dest, payload in payloads.items():
            if not graph.has_edge(sender, dest):
                raise TopologyViolationError(
                    f"node {sender} cannot reach {dest}: not a communication neighbor"
                )
            inbox[dest][sender] = payload
    return inbox


def consensus_round(graph: CommGraph, values: dict, weights: dict) -> dict:
    """One synchronous update x_k <- x_k + sum_l w_kl (x_l - x_k)."""
    outgoing = {
        k: {l: values[k] for l in graph.neighbors(k)}
        for k in graph.nodes
    }
    inbox = mailbox_exchange(graph, outgoing)
    updated = {}
    for k in graph.nodes:
        x = np.asarray(values[k], dtype=float).copy()
        for sender, payload in inbox[k].items():
            w = weights[frozenset((k, sender))]
            x += w * (np.asarray(payload, dtype=float) - values[k])
        updated[k] = x
    return updated


def run_consensus(graph: CommGraph, values: dict, cfg: ConsensusConfig) -> dict:
    """Iterated average consensus; returns per-node values after cfg.iterations."""
    if not graph.is_connected():
        log.warning("communication graph is disconnected; consensus converges per component")
    weights = edge_weights(graph, cfg.rule)
    out = {k: np.asarray(values[k], dtype=float).copy() for k in graph.nodes}
    for _ in range(cfg.iterations):
        out = consensus_round(graph, out, weights)
    return out


def exact_average(values: dict) -> dict:
    """Limit of the consensus iteration on a connected graph."""
    mean = np.mean([np.asarray(v, dtype=float) for v in values.values()], axis=0)
    return {k: mean.copy() for k in values}
