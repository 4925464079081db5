"""Symmetric k-NN graph over fused dataset representations, with dynamic
test-node attachment.

Neighbor ranking breaks ties by (distance, node index), so graph construction
is deterministic for bitwise-identical representations. Graphs are immutable;
attach_test_node returns an extended copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphError(Exception):
    pass


@dataclass
class DatasetGraph:
    node_ids: list[str]
    reps: np.ndarray  # n x d fused representations
    adjacency: list[list[int]]  # per-node sorted neighbor lists, no self-loops
    dense: np.ndarray | None = None  # optional n x n boolean adjacency matrix

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j]


def pairwise_distances(reps: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; symmetric with a zero diagonal."""
    x = np.asarray(reps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise GraphError(f"expected a nonempty 2-D matrix, got shape {x.shape}")
    sq = np.sum(x**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    d = np.sqrt(np.maximum(d2, 0.0))
    return (d + d.T) / 2.0


def build_knn_graph(
    reps: np.ndarray, k: int = 20, node_ids: list[str] | None = None
) -> DatasetGraph:
    """Union-symmetrized k-NN graph: edge (i, j) iff j in kNN(i) or i in kNN(j)."""
    x = np.asarray(reps, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise GraphError(f"need at least 2 nodes to build a graph, got {n}")
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    dist = pairwise_distances(x)
    # Self gets +inf so each row's k nearest exclude it; stable argsort over
    # equal distances resolves ties to the lower index.
    np.fill_diagonal(dist, np.inf)
    kk = min(k, n - 1)
    if kk < n - 1:
        part = np.argpartition(dist, kk, axis=1)[:, :kk]
        part_d = np.take_along_axis(dist, part, axis=1)
        sub = np.argsort(part_d, axis=1, kind="stable")
        # argpartition breaks distance ties arbitrarily, so re-rank by
        # (distance, index) within a widened candidate set when ties straddle
        # the cut; the cheap path suffices when the k-th distance is unique.
        nn = np.take_along_axis(part, sub, axis=1)
        kth = part_d[np.arange(n), sub[:, -1]]
        risky = (dist == kth[:, None]).sum(axis=1) > 1
    else:
        nn = np.argsort(dist, axis=1, kind="stable")[:, :kk]
        risky = np.zeros(n, dtype=bool)
    if risky.any():
        full = np.argsort(dist[risky], axis=1, kind="stable")[:, :kk]
        nn[risky] = full
    adj = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), kk)
    adj[rows, nn.ravel()] = True
    adj |= adj.T
    ids = node_ids if node_ids is not None else [str(i) for i in range(n)]
    # One nonzero scan for all rows; np.nonzero yields row-major order, so
    # each slice is already sorted.
    nz_rows, nz_cols = np.nonzero(adj)
    bounds = np.searchsorted(nz_rows, np.arange(n + 1))
    cols = nz_cols.tolist()
    adjacency = [cols[bounds[i] : bounds[i + 1]] for i in range(n)]
    return DatasetGraph(node_ids=list(ids), reps=x, adjacency=adjacency, dense=adj)


def attach_test_node(
    g: DatasetGraph, rep: np.ndarray, k: int = 20, node_id: str = "?"
) -> tuple[DatasetGraph, int]:
    """Extend the graph with a new node wired to its k nearest existing nodes.

    The original graph is untouched; existing nodes' own k-NN lists are not
    recomputed (edges to the new node remain symmetric on the created edges).
    """
    if g.n_nodes < 1:
        raise GraphError("cannot attach to an empty graph")
    r = np.asarray(rep, dtype=np.float64).reshape(1, -1)
    if r.shape[1] != g.reps.shape[1]:
        raise GraphError(
            f"representation width {r.shape[1]} != graph width {g.reps.shape[1]}"
        )
    d = np.sqrt(np.maximum(np.sum((g.reps - r) ** 2, axis=1), 0.0))
    order = np.argsort(d, kind="stable")
    nn = order[: min(k, g.n_nodes)].tolist()

    new_index = g.n_nodes
    adjacency = [list(nbrs) for nbrs in g.adjacency]
    for j in nn:
        adjacency[j] = sorted(adjacency[j] + [new_index])
    adjacency.append(sorted(nn))
    return (
        DatasetGraph(
            node_ids=g.node_ids + [node_id],
            reps=np.vstack([g.reps, r]),
            adjacency=adjacency,
        ),
        new_index,
    )
