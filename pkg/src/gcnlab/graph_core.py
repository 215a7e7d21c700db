"""Graph representation and the normalized propagation operator.

Graphs are simple and undirected. Node features follow the column
convention: the feature matrix has one column per node (C x N). The
propagation operator is the self-looped, symmetrically normalized
adjacency kept in CSR form and built exactly once per graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Raised when a graph or its inputs violate the structural contract."""


@dataclass(frozen=True)
class GraphBundle:
    """Immutable graph: CSR edge structure, features, labels, splits.

    Edges are stored as symmetric ordered pairs (both directions present),
    without self-loops and without duplicates; column indices are sorted
    within each row. ``degrees[i]`` counts ordered edges leaving node i
    (self-loop not counted).
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray
    features: np.ndarray  # C x N, column i = node i
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    num_classes: int
    name: str = field(default="graph")

    @property
    def num_features(self) -> int:
        return self.features.shape[0]

    @property
    def num_undirected_edges(self) -> int:
        return self.indices.size // 2

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def validate(self) -> None:
        """Check every structural invariant; raise GraphError on violation."""
        n = self.num_nodes
        if n < 1:
            raise GraphError("graph must have at least one node")
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise GraphError("malformed CSR indptr")
        if self.indptr[-1] != self.indices.size:
            raise GraphError("indptr/indices length mismatch")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphError("edge endpoint out of range")
        if not np.array_equal(self.degrees, np.diff(self.indptr)):
            raise GraphError("degrees do not match CSR row lengths")
        for i in range(n):
            row = self.neighbors(i)
            if np.any(np.diff(row) <= 0):
                raise GraphError(f"row {i} not strictly sorted (duplicate edge?)")
            if np.any(row == i):
                raise GraphError(f"self-loop stored at node {i}")
        # symmetry: (i, j) present iff (j, i) present
        coo = _to_coo_pairs(self.indptr, self.indices)
        fwd = set(map(tuple, coo))
        if any((j, i) not in fwd for i, j in fwd):
            raise GraphError("edge structure is not symmetric")
        if self.features.ndim != 2 or self.features.shape[1] != n:
            raise GraphError("features must be C x N")
        if self.labels.shape != (n,):
            raise GraphError("labels must have length N")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise GraphError("label outside [0, num_classes)")
        splits = [self.train_idx, self.val_idx, self.test_idx]
        seen: set[int] = set()
        for s in splits:
            if s.size and (s.min() < 0 or s.max() >= n):
                raise GraphError("split index out of range")
            dup = seen.intersection(s.tolist())
            if dup:
                raise GraphError(f"splits are not disjoint (shared index {min(dup)})")
            seen.update(s.tolist())


def build_graph(
    num_nodes: int,
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    test_idx: np.ndarray,
    num_classes: int,
    name: str = "graph",
) -> GraphBundle:
    """Assemble a GraphBundle from an edge list of (i, j) rows.

    The edge list is interpreted as undirected: it is symmetrized,
    de-duplicated, and self-loops are dropped, so it is robust to
    directed or redundant upstream exports.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise GraphError("edge endpoint out of range")
    mask = edges[:, 0] != edges[:, 1]
    edges = edges[mask]
    both = np.vstack([edges, edges[:, ::-1]])
    if both.size:
        keys = both[:, 0] * np.int64(num_nodes) + both[:, 1]
        keys = np.unique(keys)
        rows = keys // num_nodes
        cols = keys % num_nodes
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)
    counts = np.bincount(rows, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    # np.unique sorted keys => rows grouped, cols ascending within each row
    bundle = GraphBundle(
        num_nodes=num_nodes,
        indptr=indptr,
        indices=cols,
        degrees=counts.astype(np.int64),
        features=np.ascontiguousarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        train_idx=np.asarray(train_idx, dtype=np.int64),
        val_idx=np.asarray(val_idx, dtype=np.int64),
        test_idx=np.asarray(test_idx, dtype=np.int64),
        num_classes=int(num_classes),
        name=name,
    )
    bundle.validate()
    return bundle


@dataclass(frozen=True)
class PropagationOperator:
    """The self-looped symmetrically normalized adjacency, CSR, N x N.

    Entry (i, j) for an edge is 1/sqrt((d_i+1)(d_j+1)); the diagonal
    entry is 1/(d_i+1). Symmetric, all entries in (0, 1].
    """

    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def build_propagation_operator(graph: GraphBundle) -> PropagationOperator:
    """Normalize the self-looped adjacency: scale row i and column j by
    1/sqrt(d+1). Deterministic and idempotent; isolated nodes get a lone
    diagonal entry of 1."""
    n = graph.num_nodes
    adj = sp.csr_matrix(
        (np.ones(graph.indices.size, dtype=np.float64), graph.indices, graph.indptr),
        shape=(n, n),
    )
    hat = adj + sp.identity(n, format="csr", dtype=np.float64)
    dinv_sqrt = 1.0 / np.sqrt(graph.degrees.astype(np.float64) + 1.0)
    scale = sp.diags(dinv_sqrt)
    mat = (scale @ hat @ scale).tocsr()
    mat.sort_indices()
    return PropagationOperator(matrix=mat)


def degree_sum_statistics(graph: GraphBundle) -> tuple[float, float]:
    """Augmented degree sums S1 = sum_i (d_i+1) and S2 = sum_{i,j} (d_i+1)(d_j+1).

    S2 factorizes exactly as S1^2 (the double sum is a product of two
    identical single sums); both are accumulated in integer arithmetic
    before conversion to float.
    """
    s1 = int(np.sum(graph.degrees + 1, dtype=np.int64))
    s2 = s1 * s1
    return float(s1), float(s2)


def spmm(op: PropagationOperator, dense: np.ndarray) -> np.ndarray:
    """Right-multiply dense (C x N) by the propagation operator.

    Mixes node features along edges; exploits the operator's symmetry to
    run the CSR fast path. Linear in the dense argument.
    """
    dense = np.asarray(dense)
    if dense.ndim != 2 or dense.shape[1] != op.num_nodes:
        raise GraphError(
            f"dense operand must have {op.num_nodes} columns, got shape {dense.shape}"
        )
    return np.ascontiguousarray((op.matrix @ dense.T).T)


def _to_coo_pairs(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    rows = np.repeat(np.arange(indptr.size - 1, dtype=np.int64), np.diff(indptr))
    return np.stack([rows, indices], axis=1) if indices.size else np.empty((0, 2), np.int64)
