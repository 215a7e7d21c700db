"""L-layer GCN assembly and static skip-connection combiners.

The hidden-dimension schedule is flat: input_dim -> hidden -> ... ->
hidden -> num_classes. Weight matrices are (out_dim x in_dim) so a layer
computes W @ X with X in the C x N column convention. There is no
activation after the final layer and no bias term unless the optional
bias flag is switched on.

Skip wiring is described by ``skip_mode``:

  none      plain GCN
  residual  every eligible layer blends with the previous layer's output
  initial   every eligible layer blends with the first layer's output
  jumping   the classifier consumes the mean of all hidden outputs
  dynamic   per-layer flags, flipped on during training by the rewiring
            policy, add a scaled skip term before the nonlinearity

Eligible layers are the hidden layers 2..L-1: layer 1 has no upstream
source of matching width and the classifier's width (num_classes)
differs from the hidden width.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph_core import GraphBundle
from .initializers import InitScheme, initialize

SKIP_MODES = ("none", "residual", "initial", "jumping", "dynamic")
SKIP_SOURCES = ("first_layer_output", "previous_layer")


@dataclass
class ModelState:
    """Mutable per-run model: weights, optimizer moments, skip wiring.

    ``biases`` is None when the bias flag is off (the default; the layer
    map has no bias term). When on, layer l adds biases[l] (out_dim x 1)
    to its propagated pre-activation.
    """

    weights: list[np.ndarray]
    skip_mode: str = "none"
    alpha: float = 0.0
    skip_flags: list[bool] = field(default_factory=list)
    skip_source: str = "first_layer_output"
    layer1_cache: np.ndarray | None = None
    biases: list[np.ndarray] | None = None
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    adam_bm: list[np.ndarray] = field(default_factory=list)
    adam_bv: list[np.ndarray] = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def validate(self) -> None:
        L = self.num_layers
        if L < 1:
            raise ValueError("model needs at least one layer")
        for a, b in zip(self.weights, self.weights[1:]):
            if b.shape[1] != a.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} -> {b.shape}")
        if self.biases is not None:
            if len(self.biases) != L:
                raise ValueError("biases length must equal the layer count")
            for w, b in zip(self.weights, self.biases):
                if b.shape != (w.shape[0], 1):
                    raise ValueError(f"bias shape {b.shape} does not match layer {w.shape}")
        if self.skip_mode not in SKIP_MODES:
            raise ValueError(f"unknown skip mode {self.skip_mode!r}")
        if self.skip_source not in SKIP_SOURCES:
            raise ValueError(f"unknown skip source {self.skip_source!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if len(self.skip_flags) != L:
            raise ValueError("skip_flags length must equal the layer count")
        if L >= 1 and self.skip_flags[0]:
            raise ValueError("layer 1 can never receive a skip (no upstream source)")
        if L >= 1 and self.skip_flags[-1]:
            raise ValueError("the classifier layer can never receive a skip")


def layer_shapes(L: int, input_dim: int, hidden_dim: int, num_classes: int) -> list[tuple[int, int]]:
    """(out_dim, in_dim) per layer for the flat hidden schedule."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if min(input_dim, hidden_dim, num_classes) < 1:
        raise ValueError("all dimensions must be >= 1")
    if L == 1:
        return [(num_classes, input_dim)]
    dims = [input_dim] + [hidden_dim] * (L - 1) + [num_classes]
    return [(dims[l + 1], dims[l]) for l in range(L)]


def build_model(
    L: int,
    input_dim: int,
    hidden_dim: int,
    num_classes: int,
    scheme: InitScheme,
    graph: GraphBundle,
    *,
    skip_mode: str = "none",
    alpha: float = 0.0,
    skip_source: str = "first_layer_output",
    use_bias: bool = False,
    rng: np.random.Generator | None = None,
    dtype: type = np.float64,
) -> ModelState:
    """Initialize an L-layer model; layers consume one shared generator in order.

    Static modes (residual/initial/jumping) start with every eligible flag
    on; dynamic mode starts all-off and lets the rewiring policy flip them.
    Biases (off by default) start at zero.
    """
    shapes = layer_shapes(L, input_dim, hidden_dim, num_classes)
    if rng is None:
        rng = np.random.default_rng(scheme.seed)
    weights = [initialize(s, scheme, graph, rng=rng).astype(dtype, copy=False) for s in shapes]
    biases = [np.zeros((s[0], 1), dtype=dtype) for s in shapes] if use_bias else None
    if skip_mode in ("residual", "initial"):
        flags = [1 <= l <= L - 2 for l in range(L)]
    else:
        flags = [False] * L
    state = ModelState(
        weights=weights,
        skip_mode=skip_mode,
        alpha=alpha,
        skip_flags=flags,
        skip_source=skip_source,
        biases=biases,
        adam_m=[np.zeros_like(w) for w in weights],
        adam_v=[np.zeros_like(w) for w in weights],
        adam_bm=[np.zeros_like(b) for b in biases] if biases else [],
        adam_bv=[np.zeros_like(b) for b in biases] if biases else [],
    )
    state.validate()
    return state


def apply_static_skip(mode: str, layer_outputs: list[np.ndarray], alpha: float = 0.0) -> np.ndarray:
    """Combine layer outputs per the static skip formulas.

    residual/initial: layer_outputs is (skip_source, current); returns
    (1-alpha)*current + alpha*source, the exact identity when alpha is 0.
    jumping: returns the elementwise mean of all given outputs.
    """
    if mode in ("residual", "initial"):
        if len(layer_outputs) != 2:
            raise ValueError(f"{mode} skip combines exactly (source, current)")
        source, current = layer_outputs
        if source.shape != current.shape:
            raise ValueError("skip source and layer output differ in shape")
        if alpha == 0.0:
            return current
        return (1.0 - alpha) * current + alpha * source
    if mode == "jumping":
        if not layer_outputs:
            raise ValueError("jumping skip needs at least one layer output")
        out = layer_outputs[0].copy()
        for x in layer_outputs[1:]:
            out += x
        out /= len(layer_outputs)
        return out
    raise ValueError(f"not a static skip mode: {mode!r}")


# Checkpoint container: magic, uint64-LE header length, JSON header
# (dims, skip wiring, alpha, seed, scheme), then the weight matrices as
# row-major float64 little-endian payloads in layer order (bias vectors
# appended in layer order when the bias flag is on).
_CKPT_MAGIC = b"GCNCKPT1"


def _read_payload(f, shape) -> np.ndarray:
    count = int(np.prod(shape))
    buf = f.read(count * 8)
    if len(buf) != count * 8:
        raise ValueError("truncated checkpoint payload")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def save_checkpoint(model: ModelState, path: str | Path, scheme: InitScheme | None = None) -> None:
    header = {
        "layer_shapes": [list(w.shape) for w in model.weights],
        "num_layers": model.num_layers,
        "skip_mode": model.skip_mode,
        "alpha": model.alpha,
        "skip_flags": list(model.skip_flags),
        "skip_source": model.skip_source,
        "use_bias": model.biases is not None,
        "seed": None if scheme is None else scheme.seed,
        "scheme": None if scheme is None else scheme.kind,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for w in model.weights:
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in model.biases or []:
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> ModelState:
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        weights = [_read_payload(f, shape) for shape in header["layer_shapes"]]
        biases = None
        if header.get("use_bias"):
            biases = [_read_payload(f, (shape[0], 1)) for shape in header["layer_shapes"]]
    state = ModelState(
        weights=weights,
        skip_mode=header["skip_mode"],
        alpha=header["alpha"],
        skip_flags=[bool(x) for x in header["skip_flags"]],
        skip_source=header["skip_source"],
        biases=biases,
        adam_m=[np.zeros_like(w) for w in weights],
        adam_v=[np.zeros_like(w) for w in weights],
        adam_bm=[np.zeros_like(b) for b in biases] if biases else [],
        adam_bv=[np.zeros_like(b) for b in biases] if biases else [],
    )
    state.validate()
    return state
