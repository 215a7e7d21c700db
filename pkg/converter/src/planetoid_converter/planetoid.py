"""Reader for the Planetoid citation-archive serialization.

An archive directory holds, per dataset NAME, the files
``ind.NAME.{x,y,tx,ty,allx,ally,graph}`` (Python pickles, written by
Python 2, so they are read with latin1 decoding) and
``ind.NAME.test.index`` (one node id per line). The pieces are:

    x / y        features (scipy CSR) and one-hot labels of the labeled
                 training nodes
    tx / ty      features and one-hot labels of the test nodes
    allx / ally  features and labels of all non-test nodes
    graph        adjacency lists for every node
    test.index   positions of the test rows within the full node order;
                 the tx rows are stored in sorted-index order and must be
                 scattered back to these positions

Some archives (Citeseer) skip ids inside the test range: those are
isolated nodes with no feature row, reconstructed here as all-zero rows.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

PIECES = ("x", "y", "tx", "ty", "allx", "ally", "graph")


class SourceError(RuntimeError):
    """Archive is missing pieces or cannot be deserialized."""


@dataclass
class PlanetoidData:
    features: sp.csr_matrix  # N x C, full node order
    onehot_labels: np.ndarray  # N x K; all-zero rows for isolated test nodes
    graph: dict  # node -> neighbor list, as stored upstream
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def _load_piece(src: Path, name: str, piece: str):
    path = src / f"ind.{name}.{piece}"
    if not path.is_file():
        raise SourceError(f"missing archive piece {path.name}")
    try:
        with open(path, "rb") as f:
            return pickle.load(f, encoding="latin1")
    except Exception as exc:  # noqa: BLE001 - wrap any unpickling failure
        raise SourceError(f"cannot deserialize {path.name}: {exc}") from exc


def load_planetoid(src: str | Path, name: str) -> PlanetoidData:
    src = Path(src)
    x, y, tx, ty, allx, ally, graph = (_load_piece(src, name, p) for p in PIECES)

    index_path = src / f"ind.{name}.test.index"
    if not index_path.is_file():
        raise SourceError(f"missing archive piece {index_path.name}")
    test_reorder = np.array(
        [int(line) for line in index_path.read_text().split()], dtype=np.int64
    )
    if test_reorder.size == 0:
        raise SourceError("empty test index")
    test_sorted = np.sort(test_reorder)
    if int(test_sorted[0]) != allx.shape[0]:
        raise SourceError(
            f"test index range starts at {int(test_sorted[0])} but allx holds "
            f"{allx.shape[0]} rows; archive is inconsistent"
        )

    span = int(test_sorted[-1]) - int(test_sorted[0]) + 1
    if span != test_sorted.size:
        # gapped test range: insert zero rows for the isolated nodes
        tx_full = sp.lil_matrix((span, x.shape[1]), dtype=np.float64)
        tx_full[test_sorted - test_sorted[0], :] = tx
        tx = tx_full.tocsr()
        ty_full = np.zeros((span, y.shape[1]), dtype=y.dtype)
        ty_full[test_sorted - test_sorted[0], :] = ty
        ty = ty_full

    features = sp.vstack((allx, tx), format="lil")
    features[test_reorder, :] = features[test_sorted, :]
    onehot = np.vstack((ally, ty))
    onehot[test_reorder, :] = onehot[test_sorted, :]

    n = features.shape[0]
    if graph and (max(graph) >= n or min(graph) < 0):
        raise SourceError("graph adjacency refers to out-of-range nodes")

    n_train = y.shape[0]
    train_idx = np.arange(n_train, dtype=np.int64)
    # next 500 nodes, clamped so the validation split never reaches into
    # the test span (only relevant for miniature archives)
    val_end = min(n_train + 500, n, int(test_sorted[0]))
    val_idx = np.arange(n_train, val_end, dtype=np.int64)
    return PlanetoidData(
        features=features.tocsr().astype(np.float64),
        onehot_labels=np.asarray(onehot),
        graph=dict(graph),
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_sorted,
    )


def row_normalize(features: sp.csr_matrix) -> sp.csr_matrix:
    """Scale each row to unit sum; all-zero rows stay zero."""
    sums = np.asarray(features.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums != 0)
    return sp.diags(inv) @ features


def edge_tallies(graph: dict) -> tuple[int, int, list[tuple[int, int]]]:
    """(directed tally as stored, unique undirected count, sorted pairs).

    The directed tally counts adjacency-list entries verbatim, duplicates
    and self-loops included; the undirected pairs are de-duplicated with
    self-loops dropped.
    """
    directed = sum(len(v) for v in graph.values())
    pairs = {
        (min(i, j), max(i, j))
        for i, nbrs in graph.items()
        for j in nbrs
        if i != j
    }
    return directed, len(pairs), sorted(pairs)
