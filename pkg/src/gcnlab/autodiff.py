"""Dense kernels and manual reverse-mode differentiation for the GCN stack.

The computation graph is fixed, so the tape is just the per-layer
intermediates needed to run the chain rule by hand:

    layer l:  Z_l = (W_l @ dropout(H_{l-1})) @ A_hat  [+ alpha * skip]
              H_l = combine(relu(Z_l))                 (no relu after layer L)

Backprop through the right-multiplication by A_hat multiplies by A_hat
again (the operator is symmetric). ReLU's derivative at exactly 0 is 0.
Dropout uses inverted scaling and is active in train mode only; eval
passes are deterministic and consume no randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_core import PropagationOperator, spmm
from .model import ModelState, apply_static_skip


@dataclass
class TapeCache:
    """Intermediates of one forward pass, consumed by gcn_backward.

    ``inputs[l]`` is the clean (pre-dropout) input of layer l;
    ``outputs[l]`` is the layer's final output (logits for the last
    layer). ``skip_flags`` are the flags as used in this pass.
    """

    inputs: list[np.ndarray] = field(default_factory=list)
    dropout_masks: list[np.ndarray | None] = field(default_factory=list)
    relu_masks: list[np.ndarray | None] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)
    layer1_output: np.ndarray | None = None
    skip_flags: tuple[bool, ...] = ()
    skip_mode: str = "none"
    skip_source: str = "first_layer_output"
    alpha: float = 0.0
    dropout_rate: float = 0.0
    train_mode: bool = False

    @property
    def depth(self) -> int:
        return len(self.inputs)


@dataclass
class GradientSet:
    """Per-layer loss gradients, shapes matching the weight matrices.

    ``bias_layers`` is populated only for models with biases enabled;
    gradient-flow diagnostics read ``layers`` alone.
    """

    layers: list[np.ndarray]
    bias_layers: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.layers)


def relu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise max(x, 0) plus the strict >0 mask."""
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray, index_set: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax over the given node indices.

    Logits are K x N with one column per node. The gradient has zeros
    outside the index set and carries the 1/|set| averaging factor.
    Stabilized by per-column max subtraction.
    """
    index_set = np.asarray(index_set, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if index_set.size == 0:
        raise ValueError("index_set must be nonempty")
    cols = logits[:, index_set]
    shifted = cols - cols.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=0)
    probs = exp / denom
    picked = shifted[labels[index_set], np.arange(index_set.size)]
    loss = float(np.mean(np.log(denom) - picked))
    dcols = probs
    dcols[labels[index_set], np.arange(index_set.size)] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[:, index_set] = dcols / index_set.size
    return loss, dlogits


def _apply_dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate), keep


def gcn_forward(
    model: ModelState,
    op: PropagationOperator,
    X: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout: float = 0.0,
) -> tuple[np.ndarray, TapeCache]:
    """Run the full stack; returns (logits, tape).

    ``mode`` is "train" (dropout on, requires rng when dropout > 0) or
    "eval" (deterministic). Skip handling per model.skip_mode:
    dynamic-mode flags add alpha times the configured source to the
    pre-activation; residual/initial blend after the nonlinearity;
    jumping feeds the classifier the mean of all hidden outputs.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and dropout > 0.0 and rng is None:
        raise ValueError("train mode with dropout needs a random generator")
    if X.shape[1] != op.num_nodes:
        raise ValueError("feature matrix and operator disagree on node count")
    if model.weights[0].shape[1] != X.shape[0]:
        raise ValueError(
            f"layer 1 expects {model.weights[0].shape[1]} input rows, got {X.shape[0]}"
        )

    L = model.num_layers
    rate = dropout if train else 0.0
    tape = TapeCache(
        skip_flags=tuple(model.skip_flags),
        skip_mode=model.skip_mode,
        skip_source=model.skip_source,
        alpha=model.alpha,
        dropout_rate=rate,
        train_mode=train,
    )

    H = X
    first_hidden: np.ndarray | None = None
    hidden_outs: list[np.ndarray] = []

    for l in range(L):
        last = l == L - 1
        inp = H
        if last and model.skip_mode == "jumping" and L >= 2:
            inp = apply_static_skip("jumping", hidden_outs)
        tape.inputs.append(inp)
        if rate > 0.0:
            dropped, keep = _apply_dropout(inp, rate, rng)
            tape.dropout_masks.append(keep)
        else:
            dropped = inp
            tape.dropout_masks.append(None)
        Z = spmm(op, model.weights[l] @ dropped)
        if model.biases is not None:
            Z = Z + model.biases[l]
        if last:
            tape.relu_masks.append(None)
            tape.outputs.append(Z)
            break
        if model.skip_mode == "dynamic" and model.skip_flags[l]:
            src = first_hidden if model.skip_source == "first_layer_output" else inp
            Z = Z + model.alpha * src
        act, rmask = relu(Z)
        tape.relu_masks.append(rmask)
        if model.skip_mode == "residual" and l >= 1:
            H_l = apply_static_skip("residual", [H, act], model.alpha)
        elif model.skip_mode == "initial" and l >= 1:
            H_l = apply_static_skip("initial", [first_hidden, act], model.alpha)
        else:
            H_l = act
        if l == 0:
            first_hidden = H_l
        hidden_outs.append(H_l)
        tape.outputs.append(H_l)
        H = H_l

    tape.layer1_output = first_hidden if L >= 2 else None
    model.layer1_cache = tape.layer1_output
    return tape.outputs[-1], tape


def _dropped_input(tape: TapeCache, l: int) -> np.ndarray:
    keep = tape.dropout_masks[l]
    if keep is None:
        return tape.inputs[l]
    return tape.inputs[l] * keep / (1.0 - tape.dropout_rate)


def gcn_backward(
    model: ModelState,
    op: PropagationOperator,
    tape: TapeCache,
    dlogits: np.ndarray,
) -> GradientSet:
    """Exact loss gradients w.r.t. every weight matrix.

    Walks the layers in reverse, accumulating output-side gradients per
    layer so that residual chains, initial/first-layer skips, dynamic
    skip paths, and the jumping mean all receive their contributions
    before that layer is processed.
    """
    L = model.num_layers
    if tape.depth != L:
        raise ValueError(f"tape depth {tape.depth} does not match model depth {L}")
    if dlogits.shape != tape.outputs[-1].shape:
        raise ValueError("dlogits shape does not match the recorded logits")
    alpha = tape.alpha
    grads: list[np.ndarray | None] = [None] * L
    bias_grads: list[np.ndarray] | None = None
    # d(loss)/d(H_l) accumulators for hidden layers 0..L-2
    gH: list[np.ndarray | None] = [None] * max(L - 1, 0)

    def add(l: int, g: np.ndarray) -> None:
        if gH[l] is None:
            gH[l] = g.copy()
        else:
            gH[l] += g

    # classifier layer
    if model.biases is not None:
        bias_grads = [np.empty(0)] * L
        bias_grads[L - 1] = dlogits.sum(axis=1, keepdims=True)
    dP = spmm(op, dlogits)  # A_hat symmetric: dZ @ A_hat^T == dZ @ A_hat
    inp_L = _dropped_input(tape, L - 1)
    grads[L - 1] = dP @ inp_L.T
    dI = model.weights[L - 1].T @ dP
    keep = tape.dropout_masks[L - 1]
    if keep is not None:
        dI = dI * keep / (1.0 - tape.dropout_rate)
    if L >= 2:
        if tape.skip_mode == "jumping":
            share = dI / (L - 1)
            for k in range(L - 1):
                add(k, share)
        else:
            add(L - 2, dI)

    for l in range(L - 2, -1, -1):
        G = gH[l]
        assert G is not None
        if tape.skip_mode == "residual" and l >= 1:
            dact = G if alpha == 0.0 else (1.0 - alpha) * G
            if alpha != 0.0:
                add(l - 1, alpha * G)
        elif tape.skip_mode == "initial" and l >= 1:
            dact = G if alpha == 0.0 else (1.0 - alpha) * G
            if alpha != 0.0:
                add(0, alpha * G)
        else:
            dact = G
        dZ = dact * tape.relu_masks[l]
        if bias_grads is not None:
            bias_grads[l] = dZ.sum(axis=1, keepdims=True)
        if tape.skip_mode == "dynamic" and tape.skip_flags[l]:
            if tape.skip_source == "first_layer_output":
                add(0, alpha * dZ)
            else:
                add(l - 1, alpha * dZ)
        dP = spmm(op, dZ)
        inp = _dropped_input(tape, l)
        grads[l] = dP @ inp.T
        if l >= 1:
            dI = model.weights[l].T @ dP
            keep = tape.dropout_masks[l]
            if keep is not None:
                dI = dI * keep / (1.0 - tape.dropout_rate)
            add(l - 1, dI)

    return GradientSet(layers=list(grads), bias_layers=bias_grads)  # type: ignore[arg-type]
