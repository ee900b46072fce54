"""Fill-reducing ordering and symbolic factorization utilities."""

from __future__ import annotations

import heapq

import numpy as np
import scipy.sparse as sp

from .sparse import SparseMatrix


def _adjacency(pattern) -> list[set]:
    m = sp.csc_matrix(pattern.to_scipy() if isinstance(pattern, SparseMatrix) else pattern)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("pattern must be square")
    coo = m.tocoo()
    adj = [set() for _ in range(n)]
    for i, j in zip(coo.row.tolist(), coo.col.tolist()):
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    return adj


def fill_reducing_order(pattern, dense_fraction: float = 0.5) -> np.ndarray:
    """Minimum-degree ordering on the (symmetrized) pattern.

    Ties are broken by original degree, then index.

    Works on the explicit elimination graph. Once the minimum degree exceeds
    ``dense_fraction`` of the remaining vertices the rest is treated as a
    dense block and appended in index order.
    """
    adj = _adjacency(pattern)
    n = len(adj)
    # ties go to the vertex of smaller original degree, so hubs end up last
    deg0 = [len(a) for a in adj]
    heap = [(len(a), deg0[v], v) for v, a in enumerate(adj)]
    heapq.heapify(heap)
    alive = np.ones(n, dtype=bool)
    order = []
    remaining = n
    while heap:
        d, _, v = heapq.heappop(heap)
        if not alive[v] or d != len(adj[v]):
            continue
        if remaining > 2 and d > dense_fraction * (remaining - 1):
            break
        alive[v] = False
        order.append(v)
        remaining -= 1
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au |= nbrs
            au.discard(u)
            heapq.heappush(heap, (len(au), deg0[u], u))
        adj[v] = set()
    if remaining:
        order.extend(np.flatnonzero(alive).tolist())
    return np.asarray(order, dtype=np.int64)


def symbolic_factor(pattern, order=None):
    """Elimination tree and column structures of the Cholesky-like factor of
    P S P^T (S symmetrized pattern, P from ``order``).

    Returns (parent, col_structs) in the permuted numbering; col_structs[j]
    holds the strictly-lower row indices of column j.
    """
    adj = _adjacency(pattern)
    n = len(adj)
    order = np.arange(n) if order is None else np.asarray(order)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    children = [[] for _ in range(n)]
    parent = np.full(n, -1, dtype=np.int64)
    structs = []
    for j in range(n):
        s = {int(pos[u]) for u in adj[order[j]] if pos[u] > j}
        for c in children[j]:
            s |= structs[c]
        s.discard(j)
        structs.append(s)
        if s:
            p = min(s)
            parent[j] = p
            children[p].append(j)
    return parent, structs


def fill_count(pattern, order=None) -> int:
    """Number of fill-in entries in the strictly lower factor."""
    m = sp.csc_matrix(pattern.to_scipy() if isinstance(pattern, SparseMatrix) else pattern)
    sym = (abs(m) + abs(m.T)).tocoo()
    lower_a = int(np.count_nonzero(sym.row > sym.col))
    _, structs = symbolic_factor(pattern, order)
    return sum(len(s) for s in structs) - lower_a
