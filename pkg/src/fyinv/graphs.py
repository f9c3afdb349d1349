"""Directed graphs and single-pair shortest paths.

Edge costs may be negative: the solver runs plain Bellman-Ford on general
graphs and a single relaxation sweep in topological order on DAGs.  Negative
cycles reachable from the source raise instead of looping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NegativeCycleError, UnreachableError

_INF = float("inf")


@dataclass(frozen=True)
class Graph:
    """Directed graph with a distinguished source/sink pair.

    Edges are identified by their position in ``tails``/``heads``; every
    routine that breaks ties does so through this indexing, so two runs on
    the same Graph are bitwise identical.

    PARAMETERS
    ----------
    num_nodes : int
        Nodes are 0 .. num_nodes - 1.
    tails, heads : int arrays of shape (num_edges,)
    source, sink : int
        Endpoints of every path considered feasible.
    """

    num_nodes: int
    tails: np.ndarray
    heads: np.ndarray
    source: int
    sink: int

    def __post_init__(self):
        tails = np.asarray(self.tails, dtype=np.int64)
        heads = np.asarray(self.heads, dtype=np.int64)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "heads", heads)
        if tails.ndim != 1 or heads.shape != tails.shape:
            raise ValueError("tails and heads must be 1-D arrays of equal length")
        if self.num_nodes <= 0:
            raise ValueError("num_nodes must be positive")
        for arr in (tails, heads):
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_nodes):
                raise ValueError("edge endpoint out of range")
        for name in ("source", "sink"):
            v = getattr(self, name)
            if not 0 <= v < self.num_nodes:
                raise ValueError(f"{name} out of range")
        if self.source == self.sink:
            raise ValueError("source and sink must differ")

    @property
    def num_edges(self) -> int:
        return int(self.tails.size)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Node-edge incidence matrix A: +1 at the tail, -1 at the head."""
        a = np.zeros((self.num_nodes, self.num_edges))
        cols = np.arange(self.num_edges)
        np.add.at(a, (self.tails, cols), 1.0)
        np.add.at(a, (self.heads, cols), -1.0)
        return a

    @cached_property
    def supply(self) -> np.ndarray:
        """Right-hand side b of the flow constraints: one unit source -> sink."""
        b = np.zeros(self.num_nodes)
        b[self.source] = 1.0
        b[self.sink] = -1.0
        return b

    @cached_property
    def _edge_list(self) -> list[tuple[int, int, int]]:
        # Plain-int copies keep the relaxation loops off numpy scalars.
        return [
            (int(t), int(h), e)
            for e, (t, h) in enumerate(zip(self.tails, self.heads))
        ]

    @cached_property
    def _topo_edge_order(self) -> list[tuple[int, int, int]] | None:
        """Edges sorted by topological position of the tail, or None if cyclic.

        Kahn's algorithm with a FIFO frontier; ties inside a tail position
        fall back to edge index, so the order is deterministic.
        """
        indeg = [0] * self.num_nodes
        for _, h, _ in self._edge_list:
            indeg[h] += 1
        frontier = [v for v in range(self.num_nodes) if indeg[v] == 0]
        pos = [-1] * self.num_nodes
        k = 0
        while frontier:
            v = frontier.pop(0)
            pos[v] = k
            k += 1
            for t, h, _ in self._edge_list:
                if t == v:
                    indeg[h] -= 1
                    if indeg[h] == 0:
                        frontier.append(h)
        if k < self.num_nodes:
            return None
        return sorted(self._edge_list, key=lambda th: (pos[th[0]], th[2]))


def shortest_path(g: Graph, costs: np.ndarray) -> np.ndarray:
    """Minimum-cost source->sink path under the given edge costs.

    Returns the 0/1 edge-indicator vector of the optimal path.  Updates only
    on strict improvement while scanning edges in a fixed order (topological
    tail position on DAGs, edge index otherwise), so among equal-cost paths
    the one whose predecessor edges were reached first in index order wins;
    the output is deterministic even with all-zero costs.

    Raises UnreachableError if the sink cannot be reached and
    NegativeCycleError if a negative-cost cycle is reachable from the source.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (g.num_edges,):
        raise ValueError(f"costs must have shape ({g.num_edges},)")
    return shortest_path_batch(g, costs[None, :])[0]


def shortest_path_batch(g: Graph, costs: np.ndarray) -> np.ndarray:
    """shortest_path for a whole batch of cost vectors at once.

    One relaxation pass handles every row simultaneously, which is what
    makes Frank-Wolfe training over many samples affordable.  Row i of the
    result equals shortest_path(g, costs[i]) exactly: the sweeps visit
    edges in the same order with the same strict-improvement rule.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.shape[1] != g.num_edges:
        raise ValueError(f"costs must have shape (batch, {g.num_edges})")
    nb = costs.shape[0]
    if nb == 0:
        return np.zeros((0, g.num_edges))

    dist = np.full((nb, g.num_nodes), _INF)
    pred = np.full((nb, g.num_nodes), -1, dtype=np.int64)
    dist[:, g.source] = 0.0

    topo = g._topo_edge_order
    cand = np.empty(nb)
    mask = np.empty(nb, dtype=bool)
    if topo is not None:
        # One sweep in topological order settles a DAG; unconditional masked
        # writes beat an any() gate because most edges do improve a row.
        for t, h, e in topo:
            np.add(dist[:, t], costs[:, e], out=cand)
            np.less(cand, dist[:, h], out=mask)
            np.copyto(dist[:, h], cand, where=mask)
            np.copyto(pred[:, h], e, where=mask)
    else:
        order = g._edge_list
        for _ in range(g.num_nodes - 1):
            changed = False
            for t, h, e in order:
                np.add(dist[:, t], costs[:, e], out=cand)
                np.less(cand, dist[:, h], out=mask)
                if mask.any():
                    np.copyto(dist[:, h], cand, where=mask)
                    np.copyto(pred[:, h], e, where=mask)
                    changed = True
            if not changed:
                break
        else:
            # Full Bellman-Ford ran to the limit: check for negative cycles.
            for t, h, e in order:
                if np.any(dist[:, t] + costs[:, e] < dist[:, h]):
                    raise NegativeCycleError(
                        "negative-cost cycle reachable from the source"
                    )

    if np.any(np.isinf(dist[:, g.sink])):
        raise UnreachableError(f"no path from node {g.source} to node {g.sink}")

    tails = g.tails.tolist()
    src, snk, ne = g.source, g.sink, g.num_edges
    preds = pred.tolist()
    out = np.zeros((nb, ne))
    for i in range(nb):
        v = snk
        hops = 0
        row = preds[i]
        while v != src:
            e = row[v]
            assert e >= 0, "predecessor chain broken"
            out[i, e] = 1.0
            v = tails[e]
            hops += 1
            assert hops <= ne, "predecessor chain cycled"
    return out
