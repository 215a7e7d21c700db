"""Shared test oracles, independent of the library code paths they check."""

from __future__ import annotations

import numpy as np

from gcnlab import gcn_forward, softmax_cross_entropy


def dense_operator_oracle(graph) -> np.ndarray:
    """Self-looped symmetrically normalized adjacency via plain dense numpy."""
    n = graph.num_nodes
    A = np.zeros((n, n))
    for i in range(n):
        for j in graph.neighbors(i):
            A[i, j] = 1.0
    A_hat = A + np.eye(n)
    d = A.sum(axis=1) + 1.0
    dinv = np.diag(1.0 / np.sqrt(d))
    return dinv @ A_hat @ dinv


def double_sum_oracle(graph) -> int:
    """Literal sum_{i,j} (d_i+1)(d_j+1) in exact integer arithmetic."""
    dplus = [int(d) + 1 for d in graph.degrees]
    return sum(a * b for a in dplus for b in dplus)


def _fd_over(params, loss, h):
    grads = []
    for w in params:
        fd = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss()
            w[idx] = orig - h
            down = loss()
            w[idx] = orig
            fd[idx] = (up - down) / (2 * h)
        grads.append(fd)
    return grads


def fd_weight_gradients(model, op, graph, h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of the train-split loss w.r.t. every weight
    entry, using eval-mode forwards (no dropout)."""

    def loss() -> float:
        logits, _ = gcn_forward(model, op, graph.features, mode="eval")
        value, _ = softmax_cross_entropy(logits, graph.labels, graph.train_idx)
        return value

    return _fd_over(model.weights, loss, h)


def fd_bias_gradients(model, op, graph, h: float = 1e-5) -> list[np.ndarray]:
    def loss() -> float:
        logits, _ = gcn_forward(model, op, graph.features, mode="eval")
        value, _ = softmax_cross_entropy(logits, graph.labels, graph.train_idx)
        return value

    return _fd_over(model.biases, loss, h)


def max_rel_err(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """Max elementwise relative error with a 1e-4 denominator floor: central
    differences at h=1e-5 carry ~1e-11 of roundoff, so entries below the
    floor are effectively compared absolutely (at 1e-9 when testing against
    a 1e-5 bound) instead of dividing noise by a near-zero gradient."""
    worst = 0.0
    for a, b in zip(analytic, numeric, strict=True):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-4)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def replay_forward_loss(model, op, graph, tape) -> float:
    """Recompute the train loss of a recorded train-mode pass, reusing the
    tape's dropout masks, straight from the layer recurrence. Implemented
    independently of gcn_forward so it can serve as a finite-difference
    oracle for dropout backprop."""
    L = model.num_layers
    dense_op = op.matrix.toarray()
    H = graph.features
    first = None
    hidden = []
    for l in range(L):
        last = l == L - 1
        inp = H
        if last and model.skip_mode == "jumping" and L >= 2:
            inp = sum(hidden) / len(hidden)
        keep = tape.dropout_masks[l]
        if keep is not None:
            inp = inp * keep / (1.0 - tape.dropout_rate)
        Z = (model.weights[l] @ inp) @ dense_op
        if last:
            logits = Z
            break
        if model.skip_mode == "dynamic" and tape.skip_flags[l]:
            src = first if tape.skip_source == "first_layer_output" else H
            Z = Z + tape.alpha * src
        act = np.maximum(Z, 0.0)
        if model.skip_mode == "residual" and l >= 1:
            Hl = (1 - tape.alpha) * act + tape.alpha * H
        elif model.skip_mode == "initial" and l >= 1:
            Hl = (1 - tape.alpha) * act + tape.alpha * first
        else:
            Hl = act
        if l == 0:
            first = Hl
        hidden.append(Hl)
        H = Hl
    value, _ = softmax_cross_entropy(logits, graph.labels, graph.train_idx)
    return value
