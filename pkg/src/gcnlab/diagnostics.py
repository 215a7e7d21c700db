"""Training-health instruments: gradient flow and Dirichlet energy.

Gradient flow is the mean across layers of the entrywise p-norm of each
layer's weight gradient; a layer whose norm collapses toward zero has
stopped receiving error signal.

Dirichlet energy measures embedding smoothness against the augmented
normalized Laplacian: for features X (C x N),

    E(X) = 1/2 * sum over ordered edge pairs (i,j) of
           || x_i / sqrt(1+d_i)  -  x_j / sqrt(1+d_j) ||_2^2
         = Tr(X L X^T),   L = D~^{-1/2} (D - A) D~^{-1/2},  D~ = D + I.

Each undirected edge contributes twice to the ordered sum; that ordered
convention is exactly what makes the two forms equal. Energy collapsing
toward zero signals over-smoothed, indistinguishable node embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import GradientSet
from .graph_core import GraphBundle

_SCRATCH_ELEMS = 1 << 22  # caps the C x edge-block difference matrix at ~32 MB


@dataclass(frozen=True)
class FlowReport:
    per_layer: np.ndarray
    mean_flow: float
    p: float


@dataclass(frozen=True)
class EnergyReport:
    per_layer: np.ndarray


def gradient_flow(grads: GradientSet, p: float = 2.0) -> FlowReport:
    """Entrywise p-norm of each flattened layer gradient, plus their mean."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if len(grads) == 0:
        raise ValueError("gradient set is empty")
    per_layer = np.array([np.linalg.norm(g.ravel(), ord=p) for g in grads.layers])
    return FlowReport(per_layer=per_layer, mean_flow=float(per_layer.mean()), p=p)


def dirichlet_energy(X: np.ndarray, graph: GraphBundle) -> float:
    """Edge-sum form of the Dirichlet energy (the definition above)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != graph.num_nodes:
        raise ValueError(f"X must have {graph.num_nodes} columns, got {X.shape}")
    if graph.indices.size == 0:
        return 0.0
    dinv = 1.0 / np.sqrt(1.0 + graph.degrees.astype(np.float64))
    Xn = X * dinv[None, :]
    rows = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), graph.degrees)
    cols = graph.indices
    block = max(1024, _SCRATCH_ELEMS // X.shape[0])
    total = 0.0
    for start in range(0, cols.size, block):
        sl = slice(start, min(start + block, cols.size))
        diff = Xn[:, rows[sl]] - Xn[:, cols[sl]]
        total += float(np.sum(diff * diff))
    return 0.5 * total


def dirichlet_energy_trace(X: np.ndarray, graph: GraphBundle) -> float:
    """Trace form Tr(X L X^T); agrees with the edge-sum form."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != graph.num_nodes:
        raise ValueError(f"X must have {graph.num_nodes} columns, got {X.shape}")
    lap = augmented_normalized_laplacian(graph)
    Y = (lap @ X.T).T
    return float(np.sum(Y * X))


def augmented_normalized_laplacian(graph: GraphBundle) -> sp.csr_matrix:
    """L = D~^{-1/2} (D - A) D~^{-1/2} with D~ = D + I (raw degrees in D)."""
    n = graph.num_nodes
    adj = sp.csr_matrix(
        (np.ones(graph.indices.size, dtype=np.float64), graph.indices, graph.indptr),
        shape=(n, n),
    )
    deg = graph.degrees.astype(np.float64)
    dinv = sp.diags(1.0 / np.sqrt(1.0 + deg))
    return (dinv @ (sp.diags(deg) - adj) @ dinv).tocsr()


def energy_report(layer_outputs: list[np.ndarray], graph: GraphBundle) -> EnergyReport:
    """Per-layer Dirichlet energies of forward-pass outputs (raw, unscaled)."""
    return EnergyReport(
        per_layer=np.array([dirichlet_energy(h, graph) for h in layer_outputs])
    )
