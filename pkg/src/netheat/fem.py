"""P1 finite elements on a metric graph.

Every edge carries the same uniform mesh with ``N`` interior nodes. Vertex
nodes are shared by all incident edges, so any DOF vector is automatically
continuous on the graph and the Kirchhoff conditions arise as natural
boundary conditions of the weak form.

Global numbering: vertex ``i`` (1-based) owns DOF ``i - 1``; interior node
``k = 1..N`` of edge ``j`` (1-based) owns DOF ``n + (j - 1) * N + k - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientSet
from .graph import GraphError, MetricGraph, continuity_trace

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    graph: MetricGraph
    nodes_per_edge: int
    dof_map: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / (self.nodes_per_edge + 1)

    @property
    def total_dofs(self) -> int:
        return self.graph.n + self.graph.m * self.nodes_per_edge

    @property
    def x(self) -> np.ndarray:
        """Local coordinates of the ``N + 2`` nodes on each edge."""
        return np.linspace(0.0, 1.0, self.nodes_per_edge + 2)

    def edge_values(self, u) -> np.ndarray:
        """Nodal values along every edge, shape ``(m, N + 2)``."""
        return np.asarray(u)[self.dof_map]

    def interpolate(self, funcs: Sequence[Callable]) -> np.ndarray:
        """Nodal interpolant of per-edge functions ``f_j(x)``.

        Raises GraphError if the functions disagree at a shared vertex.
        """
        g = self.graph
        vals = np.array([np.broadcast_to(np.asarray(f(self.x), dtype=float), self.x.shape) for f in funcs])
        d = continuity_trace(g, vals[:, [0, -1]])
        if d is None:
            raise GraphError("function is not continuous on the graph")
        u = np.empty(self.total_dofs)
        u[: g.n] = d
        u[g.n :] = vals[:, 1:-1].ravel()
        return u


def build_mesh(g: MetricGraph, nodes_per_edge: int) -> Mesh:
    N = int(nodes_per_edge)
    if N < 1:
        raise MeshError("need at least one interior node per edge")
    dof = np.empty((g.m, N + 2), dtype=np.int64)
    for j, (a, b) in enumerate(g.edges):
        dof[j, 0] = a - 1
        dof[j, -1] = b - 1
        dof[j, 1:-1] = g.n + j * N + np.arange(N)
    dof.setflags(write=False)
    return Mesh(graph=g, nodes_per_edge=N, dof_map=dof)


def _edge_matrix(mesh: Mesh, j: int, local: np.ndarray) -> sp.csr_matrix:
    """Sum the 2x2 element matrix ``local`` over all elements of edge ``j``."""
    nodes = mesh.dof_map[j]
    left, right = nodes[:-1], nodes[1:]
    rows = np.concatenate([left, left, right, right])
    cols = np.concatenate([left, right, left, right])
    ne = left.size
    data = np.repeat([local[0, 0], local[0, 1], local[1, 0], local[1, 1]], ne)
    n = mesh.total_dofs
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def edge_mass_matrices(mesh: Mesh) -> list[sp.csr_matrix]:
    h = mesh.h
    local = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return [_edge_matrix(mesh, j, local) for j in range(mesh.graph.m)]


def edge_stiffness_matrices(mesh: Mesh) -> list[sp.csr_matrix]:
    h = mesh.h
    local = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    return [_edge_matrix(mesh, j, local) for j in range(mesh.graph.m)]


def _weighted_sum(mats, weights) -> sp.csr_matrix:
    out = mats[0] * float(weights[0])
    for A, w in zip(mats[1:], weights[1:]):
        out = out + A * float(w)
    return out.tocsr()


def lump(A: sp.spmatrix) -> sp.csr_matrix:
    """Row-sum diagonal lumping."""
    return sp.diags(np.asarray(A.sum(axis=1)).ravel()).tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    return _weighted_sum(edge_mass_matrices(mesh), np.ones(mesh.graph.m))


def assemble_stiffness(mesh: Mesh, coeffs: CoefficientSet, t: float) -> sp.csr_matrix:
    return _weighted_sum(edge_stiffness_matrices(mesh), coeffs.mu_at(t))


def assemble_weighted_mass(mesh: Mesh, coeffs: CoefficientSet, t: float, lumped: bool = False) -> sp.csr_matrix:
    MB = _weighted_sum(edge_mass_matrices(mesh), coeffs.b_at(t))
    return lump(MB) if lumped else MB


def assemble_load(mesh: Mesh, F, t: float) -> np.ndarray:
    """Load vector ``int F_j(t, x) phi_k(x) dx`` by 2-point Gauss per element.

    ``F`` is None (no source) or a sequence of ``m`` callables ``F_j(t, x)``
    taking an array of local coordinates; entries may be None.
    """
    out = np.zeros(mesh.total_dofs)
    if F is None:
        return out
    h = mesh.h
    xl = mesh.x[:-1]
    xi = 0.5 * (1.0 + _GAUSS)  # reference points in [0, 1]
    for j, f in enumerate(F):
        if f is None:
            continue
        nodes = mesh.dof_map[j]
        for q in xi:
            vals = np.broadcast_to(np.asarray(f(t, xl + q * h), dtype=float), xl.shape)
            w = 0.5 * h * vals
            np.add.at(out, nodes[:-1], w * (1.0 - q))
            np.add.at(out, nodes[1:], w * q)
    return out


class AssembledSystem:
    """Mass matrix plus time-dependent stiffness and weighted-mass assemblers.

    Per-edge unit matrices are built once; ``K(t)`` and ``MB(t)`` are then
    weighted sums, so repeated evaluation at many times is cheap.
    """

    def __init__(self, mesh: Mesh, coeffs: CoefficientSet, lumped: bool = False):
        if coeffs.m != mesh.graph.m:
            raise MeshError(f"coefficient set has {coeffs.m} edges, graph has {mesh.graph.m}")
        self.mesh = mesh
        self.coeffs = coeffs
        self.lumped = lumped
        self._Mj = edge_mass_matrices(mesh)
        self._Kj = edge_stiffness_matrices(mesh)
        self.M = _weighted_sum(self._Mj, np.ones(mesh.graph.m))
        nodes = mesh.dof_map
        ne = nodes.shape[1] - 1
        rows = np.arange(mesh.graph.m * ne)
        self._elem_edge = np.repeat(np.arange(mesh.graph.m), ne)
        self._D = sp.csr_matrix(
            (np.concatenate([-np.ones(rows.size), np.ones(rows.size)]),
             (np.concatenate([rows, rows]), np.concatenate([nodes[:, :-1].ravel(), nodes[:, 1:].ravel()]))),
            shape=(rows.size, mesh.total_dofs),
        )

    @property
    def n_dofs(self) -> int:
        return self.mesh.total_dofs

    def K(self, t: float) -> sp.csr_matrix:
        return _weighted_sum(self._Kj, self.coeffs.mu_at(t))

    def MB(self, t: float) -> sp.csr_matrix:
        MB = _weighted_sum(self._Mj, self.coeffs.b_at(t))
        return lump(MB) if self.lumped else MB

    def load(self, F, t: float) -> np.ndarray:
        return assemble_load(self.mesh, F, t)

    def apply_K(self, t: float, u) -> np.ndarray:
        """``K(t) u`` through element differences, exactly zero for constant ``u``."""
        w = self.coeffs.mu_at(t)[self._elem_edge] / self.mesh.h
        return self._D.T @ (w * (self._D @ np.asarray(u, dtype=float)))

    def with_coefficients(self, coeffs: CoefficientSet) -> "AssembledSystem":
        return AssembledSystem(self.mesh, coeffs, self.lumped)
