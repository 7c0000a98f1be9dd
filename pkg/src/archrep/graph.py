"""Computation-graph data model and structural validation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import GraphValidationError

STATIC_FEATURES = ("batch_size", "memory_access", "parameter_count", "flops")


@dataclass(frozen=True)
class OpDescriptor:
    """One node: either ``kind`` (+ attributes) for full graphs or ``label`` for cells."""

    kind: Optional[str] = None
    attributes: Dict[str, float] = field(default_factory=dict)
    label: Optional[int] = None

    def __hash__(self) -> int:
        return hash((self.kind, tuple(sorted(self.attributes.items())), self.label))


@dataclass
class NetworkGraph:
    nodes: List[OpDescriptor]
    adjacency: np.ndarray
    static: Dict[str, float] = field(default_factory=dict)
    target: Optional[float] = None
    id: str = ""
    family: Optional[str] = None

    def __post_init__(self) -> None:
        self.adjacency = np.asarray(self.adjacency, dtype=np.int8)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        src, dst = np.nonzero(self.adjacency)
        return [(int(s), int(d)) for s, d in zip(src, dst)]

    @classmethod
    def from_edges(cls, nodes: Sequence[OpDescriptor], edges: Sequence[Tuple[int, int]], **kw) -> "NetworkGraph":
        n = len(nodes)
        adj = np.zeros((n, n), dtype=np.int8)
        for s, d in edges:
            if not (0 <= s < n and 0 <= d < n):
                raise GraphValidationError(f"edge ({s}, {d}) references a node outside 0..{n - 1}")
            adj[s, d] = 1
        return cls(nodes=list(nodes), adjacency=adj, **kw)

    def permuted(self, order: Sequence[int]) -> "NetworkGraph":
        """New graph whose node ``k`` is old node ``order[k]``."""
        order = list(order)
        adj = self.adjacency[np.ix_(order, order)]
        return NetworkGraph(
            nodes=[self.nodes[i] for i in order],
            adjacency=adj,
            static=dict(self.static),
            target=self.target,
            id=self.id,
            family=self.family,
        )


def topological_order(adjacency: np.ndarray) -> Optional[List[int]]:
    """Kahn's algorithm, smallest index first; ``None`` if there is a cycle."""
    adj = np.asarray(adjacency)
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int).tolist()
    succ = [np.flatnonzero(adj[i]).tolist() for i in range(n)]
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: List[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    return order if len(order) == n else None


def is_topologically_ordered(adjacency: np.ndarray) -> bool:
    return not np.any(np.tril(np.asarray(adjacency)))


def validate_graph(g: NetworkGraph) -> List[str]:
    """Return a list of violations; empty means the graph is valid.

    Dangling nodes (a non-input without predecessors or a non-output without
    successors) are reported with a ``warning:`` prefix and are not fatal.
    """
    out: List[str] = []
    A = np.asarray(g.adjacency)
    n = g.num_nodes
    if A.shape != (n, n):
        return [f"adjacency shape {A.shape} does not match {n} nodes"]
    if n == 0:
        return ["graph has no nodes"]
    if not np.isin(A, (0, 1)).all():
        out.append("adjacency is not binary")
    loops = np.flatnonzero(np.diag(A))
    if loops.size:
        out.append(f"self-loop at node(s) {loops.tolist()}")
    off = A.copy()
    np.fill_diagonal(off, 0)
    if topological_order(off) is None:
        out.append("cycle detected: adjacency is not a DAG")

    for i, op in enumerate(g.nodes):
        if op.kind is None and op.label is None:
            out.append(f"node {i} has neither kind nor label")
        for name, v in op.attributes.items():
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                out.append(f"node {i} attribute {name}={v!r} must be finite and >= 0")

    for name, v in g.static.items():
        if not math.isfinite(v):
            out.append(f"static feature {name}={v!r} is not finite")
    if g.target is not None and not math.isfinite(g.target):
        out.append(f"target {g.target!r} is not finite")

    if n > 1:
        indeg = A.sum(axis=0)
        outdeg = A.sum(axis=1)
        for i, op in enumerate(g.nodes):
            if op.kind != "input" and indeg[i] == 0 and i != 0:
                out.append(f"warning: node {i} has no predecessor")
            if op.kind != "output" and outdeg[i] == 0 and i != n - 1:
                out.append(f"warning: node {i} has no successor")
    return out


def fatal_violations(violations: Sequence[str]) -> List[str]:
    return [v for v in violations if not v.startswith("warning:")]


def ensure_valid(g: NetworkGraph) -> None:
    bad = fatal_violations(validate_graph(g))
    if bad:
        raise GraphValidationError(f"graph {g.id!r} is invalid: {'; '.join(bad)}", bad)


def canonical_order(g: NetworkGraph) -> NetworkGraph:
    """Return ``g`` unchanged if already topologically ordered, else re-sorted."""
    if is_topologically_ordered(g.adjacency):
        return g
    order = topological_order(g.adjacency)
    if order is None:
        raise GraphValidationError(f"graph {g.id!r} has a cycle", ["cycle"])
    return g.permuted(order)
