"""Oriented undirected graphs and the incidence/Laplacian algebra built on them.

Column ``k`` of the incidence matrix carries ``+1`` at the tail of edge ``k``
and ``-1`` at its head. Edge order is fixed at construction and defines the
column order of every edge-indexed quantity in the package.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class NetworkGraph:
    """Connected graph on nodes ``0..n-1`` with an arbitrary fixed orientation.

    Attributes:
        n: number of nodes
        edges: ordered ``(tail, head)`` pairs
    """

    n: int
    edges: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        for k, (a, b) in enumerate(edges):
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge {k} = ({a}, {b}) has a node index outside [0, {self.n})")
            if a == b:
                raise ValueError(f"edge {k} is a self-loop on node {a}")
        if len(_reachable(self.n, edges, 0)) != self.n:
            raise ValueError("graph is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self) -> np.ndarray:
        return build_incidence(self)

    def is_acyclic(self) -> bool:
        return cycle_space_dim(self) == 0

    def adjacent_edges(self, node: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if node in e]


def _reachable(n, edges, start):
    nbrs = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in nbrs[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def build_incidence(graph: NetworkGraph) -> np.ndarray:
    B = np.zeros((graph.n, graph.m))
    for k, (tail, head) in enumerate(graph.edges):
        B[tail, k] = 1.0
        B[head, k] = -1.0
    return B


def cycle_space_dim(graph: NetworkGraph) -> int:
    """Dimension of the nullspace of ``B``, i.e. ``m - n + 1`` for a connected graph."""
    return graph.m - graph.n + 1


def extract_spanning_tree(graph: NetworkGraph) -> tuple[list[int], np.ndarray]:
    """Breadth-first spanning tree rooted at node 0.

    Neighbours are expanded in listed edge order, so the result is deterministic.
    Returns the sorted tree edge indices and the ``n x (n-1)`` submatrix of ``B``.
    """
    visited = {0}
    queue = deque([0])
    tree = []
    while queue:
        i = queue.popleft()
        for k, (a, b) in enumerate(graph.edges):
            if i not in (a, b):
                continue
            j = b if a == i else a
            if j not in visited:
                visited.add(j)
                tree.append(k)
                queue.append(j)
    tree.sort()
    return tree, graph.incidence[:, tree]


def weighted_laplacian(B: np.ndarray, Q) -> np.ndarray:
    """``B Q^{-1} B^T`` for a positive diagonal weight ``Q`` (matrix or vector of weights)."""
    q = np.diag(Q) if np.ndim(Q) == 2 else np.asarray(Q, dtype=float)
    if q.shape != (B.shape[1],):
        raise ValueError(f"expected {B.shape[1]} edge weights, got {q.shape}")
    if np.any(q <= 0):
        raise ValueError(f"edge weights must be positive, got {q.tolist()}")
    L = (B / q) @ B.T
    return 0.5 * (L + L.T)


def moore_penrose(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Pseudoinverse; singular values below ``tol * sigma_max`` are treated as zero.

    Symmetric input goes through ``eigh`` so that the result stays exactly
    symmetric, everything else through the SVD.
    """
    M = np.asarray(M)
    if M.size == 0:
        return np.zeros(M.shape[::-1], dtype=M.dtype)
    if M.shape[0] == M.shape[1] and np.allclose(M, M.conj().T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(M).max())):
        evals, V = np.linalg.eigh(0.5 * (M + M.conj().T))
        scale = np.abs(evals).max()
        if scale == 0.0:
            return np.zeros_like(M)
        keep = np.abs(evals) > tol * scale
        inv = np.zeros_like(evals)
        inv[keep] = 1.0 / evals[keep]
        out = (V * inv) @ V.conj().T
        return 0.5 * (out + out.conj().T)
    U, sv, Vh = np.linalg.svd(M, full_matrices=False)
    if sv[0] == 0.0:
        return np.zeros(M.shape[::-1], dtype=M.dtype)
    keep = sv > tol * sv[0]
    return (Vh[keep].conj().T / sv[keep]) @ U[:, keep].conj().T


def kron_identity(M: np.ndarray, p: int) -> np.ndarray:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return np.kron(M, np.eye(p))


def comm_laplacian(graph: NetworkGraph) -> np.ndarray:
    """Laplacian of the line graph: two edges communicate iff they share a node."""
    m = graph.m
    adj = np.zeros((m, m))
    for k in range(m):
        for j in range(k + 1, m):
            if set(graph.edges[k]) & set(graph.edges[j]):
                adj[k, j] = adj[j, k] = 1.0
    return np.diag(adj.sum(axis=1)) - adj


def centering(n: int) -> np.ndarray:
    """Projection ``I - 11^T/n`` onto the complement of the consensus direction."""
    return np.eye(n) - np.full((n, n), 1.0 / n)
