"""Finite simple connected graphs with oriented unit-length edges.

Vertices and edges are numbered from 1 in the public API, matching the
usual notation for incidence matrices; arrays are 0-based internally.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Raised when an edge list does not describe a valid metric graph."""


@dataclass(frozen=True)
class IncidenceMatrices:
    phi_plus: np.ndarray
    phi_minus: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.phi_plus - self.phi_minus


@dataclass(frozen=True)
class MetricGraph:
    """Graph whose edge ``j`` runs from ``tail[j]`` (x=0) to ``head[j]`` (x=1).

    ``tail`` and ``head`` hold 1-based vertex ids.
    """

    n: int
    tail: tuple[int, ...]
    head: tuple[int, ...]
    strict: bool = False
    _degree: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        deg = [0] * self.n
        for a, b in zip(self.tail, self.head):
            deg[a - 1] += 1
            deg[b - 1] += 1
        object.__setattr__(self, "_degree", tuple(deg))

    @property
    def m(self) -> int:
        return len(self.tail)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.tail, self.head))

    def degree(self, i: int) -> int:
        return self._degree[i - 1]


def build_graph(edges, strict: bool = False, n: int | None = None) -> MetricGraph:
    """Validate an edge list of ``(tail, head)`` pairs and build the graph.

    ``n`` defaults to the largest vertex id that appears. In strict mode every
    vertex must have degree at least 2; otherwise degree-1 vertices are allowed
    and carry a plain Neumann condition.
    """
    edges = [(int(a), int(b)) for a, b in edges]
    if not edges:
        raise GraphError("edge list is empty")
    top = max(max(e) for e in edges)
    if n is None:
        n = top
    if top > n or min(min(e) for e in edges) < 1:
        raise GraphError(f"vertex ids must lie in 1..{n}")

    seen = set()
    for j, (a, b) in enumerate(edges, start=1):
        if a == b:
            raise GraphError(f"edge {j} is a loop at vertex {a}")
        key = frozenset((a, b))
        if key in seen:
            raise GraphError(f"edge {j} duplicates the pair ({a}, {b})")
        seen.add(key)

    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a - 1].append(b - 1)
        adj[b - 1].append(a - 1)
    reached = [False] * n
    reached[0] = True
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if not reached[w]:
                reached[w] = True
                queue.append(w)
    if not all(reached):
        missing = [i + 1 for i, r in enumerate(reached) if not r]
        raise GraphError(f"graph is disconnected; unreachable vertices {missing}")

    g = MetricGraph(n=n, tail=tuple(a for a, _ in edges), head=tuple(b for _, b in edges), strict=strict)
    if strict:
        low = [i for i in range(1, n + 1) if g.degree(i) < 2]
        if low:
            raise GraphError(f"strict mode requires degree at least 2; vertices {low} have degree 1")
    return g


def incidence(g: MetricGraph) -> IncidenceMatrices:
    plus = np.zeros((g.n, g.m))
    minus = np.zeros((g.n, g.m))
    for j, (a, b) in enumerate(g.edges):
        minus[a - 1, j] = 1.0
        plus[b - 1, j] = 1.0
    return IncidenceMatrices(phi_plus=plus, phi_minus=minus)


def gamma(g: MetricGraph, i: int) -> set[int]:
    """1-based ids of the edges that start or end at vertex ``i``."""
    if not 1 <= i <= g.n:
        raise GraphError(f"vertex {i} out of range 1..{g.n}")
    return {j for j, (a, b) in enumerate(g.edges, start=1) if i in (a, b)}


def continuity_trace(g: MetricGraph, end_values, tol: float | None = None) -> np.ndarray | None:
    """Return vertex values ``d`` if the edge endpoint values agree at every vertex.

    ``end_values`` is an (m, 2) array of ``(f_j(0), f_j(1))``. Returns ``None``
    when two incident edges disagree by more than ``tol`` at a shared vertex.
    The default tolerance is ``1e-12 * max(1, max|values|)``.
    """
    vals = np.asarray(end_values, dtype=float).reshape(g.m, 2)
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))) if vals.size else 1.0)
    d = np.full(g.n, np.nan)
    for j, (a, b) in enumerate(g.edges):
        for vertex, value in ((a, vals[j, 0]), (b, vals[j, 1])):
            cur = d[vertex - 1]
            if np.isnan(cur):
                d[vertex - 1] = value
            elif abs(cur - value) > tol:
                return None
    return d
