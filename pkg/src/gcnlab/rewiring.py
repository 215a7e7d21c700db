"""Gradient-guided dynamic rewiring.

Each hidden layer's gradient-flow value is compared against a baseline
captured after the first optimization step. Whenever a layer's flow
drops strictly below ``p_threshold`` times its baseline, a sticky skip
connection into that layer is switched on and training proceeds as
normal. The skip source is the first layer's output by default (the
better-performing variant) or the previous layer's output.

Skips never target layer 1 (no upstream source) or the classifier layer
(its width differs from the hidden width).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import TapeCache
from .diagnostics import FlowReport
from .model import SKIP_SOURCES

log = logging.getLogger(__name__)


@dataclass
class RewiringState:
    """Per-run rewiring policy state, owned by the training loop."""

    num_layers: int
    alpha: float = 0.1
    p_threshold: float = 0.5
    skip_source: str = "first_layer_output"
    baseline_flow: np.ndarray | None = None
    active: list[bool] = field(default_factory=list)
    activation_log: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        # threshold 0 is allowed and disables rewiring (the indicator can
        # never fire against a strict < comparison)
        if not 0.0 <= self.p_threshold < 1.0:
            raise ValueError("p_threshold must lie in [0, 1)")
        if self.skip_source not in SKIP_SOURCES:
            raise ValueError(f"unknown skip source {self.skip_source!r}")
        if not self.active:
            self.active = [False] * self.num_layers

    def eligible_layers(self) -> range:
        """0-indexed hidden layers that may receive a skip (2..L-1 1-indexed)."""
        return range(1, self.num_layers - 1)


def record_baseline(state: RewiringState, flow: FlowReport) -> RewiringState:
    """Capture per-layer baseline flow; call once, after the first step's backward."""
    if state.baseline_flow is not None:
        raise RuntimeError("baseline already recorded for this run")
    if flow.per_layer.size != state.num_layers:
        raise ValueError("flow report depth does not match the model")
    state.baseline_flow = flow.per_layer.copy()
    for l in state.eligible_layers():
        if state.baseline_flow[l] == 0.0:
            log.warning(
                "layer %d baseline gradient flow is 0; its rewiring indicator can never fire",
                l + 1,
            )
    return state


def update_skips(state: RewiringState, flow: FlowReport, epoch: int) -> RewiringState:
    """Activate (sticky) any eligible layer whose flow dropped below
    p_threshold times its baseline."""
    if state.baseline_flow is None:
        raise RuntimeError("record_baseline must run before update_skips")
    for l in state.eligible_layers():
        if state.active[l]:
            continue
        if flow.per_layer[l] < state.p_threshold * state.baseline_flow[l]:
            state.active[l] = True
            state.activation_log.append(
                {
                    "epoch": int(epoch),
                    "layer": l + 1,
                    "baseline": float(state.baseline_flow[l]),
                    "flow": float(flow.per_layer[l]),
                }
            )
    return state


def skip_term(state: RewiringState, tape: TapeCache, layer: int) -> np.ndarray:
    """The additive term alpha * source for an active skip into ``layer``
    (0-indexed), read back from a recorded forward pass."""
    if not 0 <= layer < state.num_layers:
        raise ValueError(f"layer {layer} out of range")
    if not state.active[layer]:
        raise ValueError(f"layer {layer} has no active skip")
    if state.skip_source == "first_layer_output":
        src = tape.layer1_output
        if src is None:
            raise ValueError("tape has no first-layer snapshot")
    else:
        src = tape.inputs[layer]
    return state.alpha * src
