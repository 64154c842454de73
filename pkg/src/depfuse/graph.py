"""Typed dependency graphs and their union / intersection ensembles."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from depfuse.conllu import DependencyTree
from depfuse.errors import NodeCountMismatch

INFINITE = math.inf


class EdgeType(IntEnum):
    # values index rows of the edge-type embedding table
    PARENT_TO_CHILD = 0
    CHILD_TO_PARENT = 1
    SELF_LOOP = 2

    @property
    def short(self) -> str:
        return ("P2C", "C2P", "SL")[self]


class TypedEdge(NamedTuple):
    src: int
    dst: int
    etype: EdgeType


@dataclass(frozen=True)
class EnsembleGraph:
    """Deduplicated typed edges over nodes 1..n.

    Messages flow src -> dst. Every node carries exactly one self-loop and
    every parent-to-child edge has its child-to-parent reciprocal.
    """

    n: int
    edges: frozenset
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset(TypedEdge(*e) for e in self.edges))
        object.__setattr__(self, "sources", tuple(self.sources))
        self.validate()

    def validate(self) -> None:
        loops = 0
        for src, dst, et in self.edges:
            if not (1 <= src <= self.n and 1 <= dst <= self.n):
                raise ValueError(f"edge ({src},{dst}) outside 1..{self.n}")
            if (et == EdgeType.SELF_LOOP) != (src == dst):
                raise ValueError(f"edge ({src},{dst},{et.short}) violates self-loop rule")
            if et == EdgeType.SELF_LOOP:
                loops += 1
            elif et == EdgeType.PARENT_TO_CHILD:
                if TypedEdge(dst, src, EdgeType.CHILD_TO_PARENT) not in self.edges:
                    raise ValueError(f"missing reciprocal for ({src},{dst},P2C)")
            elif TypedEdge(dst, src, EdgeType.PARENT_TO_CHILD) not in self.edges:
                raise ValueError(f"missing reciprocal for ({src},{dst},C2P)")
        if loops != self.n:
            raise ValueError(f"expected {self.n} self-loops, found {loops}")

    def __len__(self):
        return len(self.edges)

    def dependency_pairs(self) -> set[tuple[int, int]]:
        """(head, dependent) pairs underlying the parent-to-child edges."""
        return {(s, d) for s, d, t in self.edges if t == EdgeType.PARENT_TO_CHILD}

    def type_mask(self, typed: bool = True) -> np.ndarray:
        """Boolean adjacency of shape (C, n, n) with mask[c, dst, src].

        With ``typed`` the three edge types occupy separate channels (C=3);
        otherwise all edges collapse into a single channel (C=1).
        """
        mask = np.zeros((3 if typed else 1, self.n, self.n), dtype=bool)
        for src, dst, et in self.edges:
            mask[int(et) if typed else 0, dst - 1, src - 1] = True
        return mask

    def sorted_edges(self) -> list[TypedEdge]:
        return sorted(self.edges)


def build_typed_graph(tree: DependencyTree) -> EnsembleGraph:
    n = len(tree)
    edges = {TypedEdge(i, i, EdgeType.SELF_LOOP) for i in range(1, n + 1)}
    for h, d in tree.edges():
        edges.add(TypedEdge(h, d, EdgeType.PARENT_TO_CHILD))
        edges.add(TypedEdge(d, h, EdgeType.CHILD_TO_PARENT))
    return EnsembleGraph(n, frozenset(edges), (tree.parser_id,))


def _common_n(graphs) -> int:
    if not graphs:
        raise ValueError("need at least one graph")
    n = graphs[0].n
    for g in graphs[1:]:
        if g.n != n:
            raise NodeCountMismatch(f"node counts differ: {n} vs {g.n}")
    return n


def union_graphs(graphs) -> EnsembleGraph:
    graphs = list(graphs)
    n = _common_n(graphs)
    edges = frozenset().union(*(g.edges for g in graphs))
    return EnsembleGraph(n, edges, tuple(s for g in graphs for s in g.sources))


def intersect_graphs(graphs) -> EnsembleGraph:
    graphs = list(graphs)
    n = _common_n(graphs)
    edges = frozenset(graphs[0].edges).intersection(*(g.edges for g in graphs[1:]))
    # self-loops are a model construct, never dropped
    edges |= {TypedEdge(i, i, EdgeType.SELF_LOOP) for i in range(1, n + 1)}
    return EnsembleGraph(n, edges, tuple(s for g in graphs for s in g.sources))


def fuse_trees(trees, mode: str = "union") -> EnsembleGraph:
    """Typed ensemble graph for one sentence.

    ``mode`` is ``union``, ``intersection`` or ``single:<parser_id>``.
    """
    trees = list(trees)
    if mode.startswith("single:"):
        pid = mode.split(":", 1)[1]
        chosen = [t for t in trees if t.parser_id == pid]
        if not chosen:
            raise KeyError(f"no tree from parser {pid!r}; have {[t.parser_id for t in trees]}")
        return build_typed_graph(chosen[0])
    graphs = [build_typed_graph(t) for t in trees]
    if mode == "union":
        return union_graphs(graphs)
    if mode == "intersection":
        return intersect_graphs(graphs)
    raise ValueError(f"unknown fusion mode {mode!r}")


def graph_diameter(graph: EnsembleGraph):
    """Longest shortest directed path over ordered node pairs (INFINITE if disconnected)."""
    adj = [[] for _ in range(graph.n + 1)]
    for src, dst, et in graph.edges:
        if et != EdgeType.SELF_LOOP:
            adj[src].append(dst)
    best = 0
    for start in range(1, graph.n + 1):
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if len(dist) < graph.n:
            return INFINITE
        best = max(best, max(dist.values()))
    return best


def edge_overlap(a: EnsembleGraph, b: EnsembleGraph) -> float:
    """Jaccard overlap of the non-self-loop typed edges of two graphs."""
    ea = {e for e in a.edges if e.etype != EdgeType.SELF_LOOP}
    eb = {e for e in b.edges if e.etype != EdgeType.SELF_LOOP}
    if not ea and not eb:
        return 1.0
    return len(ea & eb) / len(ea | eb)
