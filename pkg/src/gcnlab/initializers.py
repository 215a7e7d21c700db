"""Weight initialization schemes.

Besides the Glorot baseline, three topology-aware isometric variants tie
the initial weight magnitude to the graph's augmented degree statistics:
every weight column is targeted at squared norm

    N^2 / sum_{i,j} (d_i+1)(d_j+1)

with cross-column orthogonality. ``iso_uniform`` and ``iso_gaussian``
meet the magnitude in expectation via i.i.d. entries (per-entry variance
N^2 / (C_out * S2)); ``iso_orthogonal`` enforces both conditions exactly.
Degrees are raw degrees; the +1 is always explicit in the formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph_core import GraphBundle, degree_sum_statistics

KINDS = ("glorot_uniform", "iso_uniform", "iso_gaussian", "iso_orthogonal")


@dataclass(frozen=True)
class InitScheme:
    kind: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown init kind {self.kind!r}; expected one of {KINDS}")


def iso_magnitude(graph: GraphBundle) -> float:
    """Target squared column norm N^2 / S2."""
    _, s2 = degree_sum_statistics(graph)
    return graph.num_nodes**2 / s2


def iso_uniform_bound(graph: GraphBundle, out_dim: int) -> float:
    """Half-width b of the uniform law U[-b, b] whose per-entry variance
    b^2/3 equals the isometric Gaussian variance N^2 / (out_dim * S2)."""
    if out_dim < 1:
        raise ValueError("out_dim must be >= 1")
    _, s2 = degree_sum_statistics(graph)
    return math.sqrt(3.0 * graph.num_nodes**2 / (out_dim * s2))


def initialize(
    shape: tuple[int, int],
    scheme: InitScheme,
    graph: GraphBundle,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Draw one weight matrix of the given (out_dim, in_dim) shape.

    When ``rng`` is omitted a fresh generator is seeded from the scheme,
    so a single call is fully determined by (shape, scheme, graph).
    Multi-layer builds pass one shared generator that layers consume in
    order.
    """
    out_dim, in_dim = shape
    if out_dim < 1 or in_dim < 1:
        raise ValueError(f"invalid weight shape {shape}")
    if rng is None:
        rng = np.random.default_rng(scheme.seed)

    if scheme.kind == "glorot_uniform":
        b = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-b, b, size=shape)
    if scheme.kind == "iso_uniform":
        b = iso_uniform_bound(graph, out_dim)
        return rng.uniform(-b, b, size=shape)
    if scheme.kind == "iso_gaussian":
        _, s2 = degree_sum_statistics(graph)
        sigma = math.sqrt(graph.num_nodes**2 / (out_dim * s2))
        return rng.normal(0.0, sigma, size=shape)
    # iso_orthogonal: exact column orthogonality needs out_dim >= in_dim
    if out_dim < in_dim:
        raise ValueError(
            f"iso_orthogonal requires out_dim >= in_dim; got shape {shape} "
            "(cannot make more orthogonal columns than the ambient dimension)"
        )
    gauss = rng.normal(0.0, 1.0, size=shape)
    q, _ = np.linalg.qr(gauss)  # q: out_dim x in_dim, orthonormal columns
    return q * math.sqrt(iso_magnitude(graph))
