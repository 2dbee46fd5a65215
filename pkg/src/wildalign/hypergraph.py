"""Hypergraphs stored as networkx bipartite incidence graphs."""

import logging
from typing import Hashable, Iterable

import networkx as nx

logger = logging.getLogger(__name__)

# Hypernode id constructors: ("s", source), ("t", target), ("p", provenance id).


def source_node(entity: int) -> tuple[str, int]:
    return ("s", entity)


def target_node(entity: int) -> tuple[str, int]:
    return ("t", entity)


def projection_node(pid: int) -> tuple[str, int]:
    return ("p", pid)


def _edge_node(key: Hashable) -> tuple[str, Hashable]:
    return ("e", key)


class Hypergraph:
    """Hyperedges keyed by an arbitrary hashable, with ordered member lists.

    Each hyperedge is an ``("e", key)`` node in a bipartite ``nx.Graph``
    linked to its members. Hypernodes are registered explicitly, so a
    hyperedge may contain an anchor member that is not itself a hypernode.
    Members are deduplicated within a hyperedge and keep insertion order.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.incidence = nx.Graph(name=name)
        self._hypernodes: dict[Hashable, None] = {}
        self._hyperedges: dict[Hashable, None] = {}

    def add_hypernode(self, node: Hashable, **attrs) -> None:
        self.incidence.add_node(node, bipartite=0, **attrs)
        self._hypernodes.setdefault(node, None)

    def add_hyperedge(self, key: Hashable, members: Iterable[Hashable]) -> None:
        edge = _edge_node(key)
        if key in self._hyperedges:
            raise ValueError(f"hyperedge {key!r} already exists in {self.name or 'hypergraph'}")
        self.incidence.add_node(edge, bipartite=1)
        self._hyperedges[key] = None
        for member in members:
            if member not in self.incidence:
                self.incidence.add_node(member, bipartite=0)
            self.incidence.add_edge(edge, member)

    @property
    def hypernodes(self) -> tuple[Hashable, ...]:
        return tuple(self._hypernodes)

    @property
    def hyperedges(self) -> tuple[Hashable, ...]:
        return tuple(self._hyperedges)

    def members(self, key: Hashable) -> tuple[Hashable, ...]:
        return tuple(self.incidence.adj[_edge_node(key)])

    def memberships(self, node: Hashable) -> tuple[Hashable, ...]:
        """Keys of the hyperedges containing ``node``."""
        if node not in self.incidence:
            return ()
        return tuple(n[1] for n in self.incidence.adj[node])

    def __contains__(self, node: Hashable) -> bool:
        return node in self._hypernodes

    def __repr__(self) -> str:
        return f"Hypergraph({self.name!r}, nodes={len(self._hypernodes)}, edges={len(self._hyperedges)})"


def union(layers: Iterable[tuple[Hashable, Hypergraph]]) -> Hypergraph:
    """Union of layered hypergraphs; hyperedges are re-keyed ``(layer, key)``."""
    merged = Hypergraph("union")
    for layer, graph in layers:
        for node in graph.hypernodes:
            merged.add_hypernode(node)
        for key in graph.hyperedges:
            merged.add_hyperedge((layer, key), graph.members(key))
    return merged
