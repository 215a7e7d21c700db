"""Full-batch transductive training loop.

One run owns its model, Adam moments, and (in dynamic mode) the rewiring
state. Per epoch: train-mode forward, cross-entropy on the train split,
manual backward, gradient-flow report, rewiring bookkeeping, Adam step,
then eval-mode metrics on the configured stride. The returned model is
the snapshot from the epoch with the best validation accuracy (ties go
to the earliest epoch).

Weight decay is the classic Adam-with-L2 convention: the decay term is
added to the gradient before the moment updates, uniformly across all
layers. A single seeded generator drives both initialization and
dropout, so identical (graph, config) pairs produce bitwise-identical
metric histories.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import GradientSet, gcn_backward, gcn_forward, softmax_cross_entropy
from .diagnostics import EnergyReport, FlowReport, energy_report, gradient_flow
from .graph_core import GraphBundle, PropagationOperator, build_propagation_operator
from .initializers import KINDS, InitScheme
from .model import SKIP_MODES, SKIP_SOURCES, ModelState, build_model
from .rewiring import RewiringState, record_baseline, update_skips

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 0.005
    weight_decay: float = 5e-4
    epochs: int = 1500
    hidden_dim: int = 64
    num_layers: int = 2
    init: str = "glorot_uniform"
    skip_mode: str = "none"
    alpha: float = 0.1
    p_threshold: float = 0.5
    skip_source: str = "first_layer_output"
    dropout: float = 0.5
    bias: bool = False
    seed: int = 0
    eval_stride: int = 1
    energy_stride: int = 10
    flow_norm: float = 2.0
    dtype: str = "float64"

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.init not in KINDS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.skip_mode not in SKIP_MODES:
            raise ValueError(f"unknown skip mode {self.skip_mode!r}")
        if self.skip_source not in SKIP_SOURCES:
            raise ValueError(f"unknown skip source {self.skip_source!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.p_threshold < 1.0:
            raise ValueError("p_threshold must lie in [0, 1)")
        if self.eval_stride < 1 or self.energy_stride < 0:
            raise ValueError("eval_stride must be >= 1 and energy_stride >= 0")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    flow: FlowReport
    val_loss: float | None = None
    val_accuracy: float | None = None
    test_accuracy: float | None = None
    energy: EnergyReport | None = None
    skip_events: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "test_accuracy": self.test_accuracy,
            "flow": {
                "per_layer": [float(x) for x in self.flow.per_layer],
                "mean": self.flow.mean_flow,
                "p": self.flow.p,
            },
            "energy": None
            if self.energy is None
            else {"per_layer": [float(x) for x in self.energy.per_layer]},
            "skip_events": self.skip_events,
        }


@dataclass
class RunSummary:
    best_val_epoch: int
    best_val_accuracy: float
    test_accuracy: float


def adam_step(
    weights: list[np.ndarray],
    grads: list[np.ndarray],
    moments: tuple[list[np.ndarray], list[np.ndarray]],
    t: int,
    lr: float,
    betas: tuple[float, float] = ADAM_BETAS,
    eps: float = ADAM_EPS,
    weight_decay: float = 0.0,
) -> tuple[list[np.ndarray], tuple[list[np.ndarray], list[np.ndarray]]]:
    """One bias-corrected Adam update, in place, with L2 folded into the gradient."""
    if t < 1:
        raise ValueError("step count t must be >= 1")
    b1, b2 = betas
    m, v = moments
    for w, g, mi, vi in zip(weights, grads, m, v, strict=True):
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match weight {w.shape}")
        geff = g + weight_decay * w if weight_decay else g
        mi *= b1
        mi += (1 - b1) * geff
        vi *= b2
        vi += (1 - b2) * geff * geff
        mhat = mi / (1 - b1**t)
        vhat = vi / (1 - b2**t)
        w -= lr * mhat / (np.sqrt(vhat) + eps)
    return weights, (m, v)


def evaluate(
    model: ModelState,
    graph: GraphBundle,
    split: np.ndarray,
    op: PropagationOperator | None = None,
    logits: np.ndarray | None = None,
) -> tuple[float, float]:
    """Eval-mode loss and accuracy on a split; argmax ties break to the
    lowest class index. Pass precomputed eval logits to skip the forward."""
    split = np.asarray(split, dtype=np.int64)
    if split.size == 0:
        raise ValueError("split must be nonempty")
    if logits is None:
        if op is None:
            op = build_propagation_operator(graph)
        logits, _ = gcn_forward(model, op, graph.features, mode="eval")
    loss, _ = softmax_cross_entropy(logits, graph.labels, split)
    pred = np.argmax(logits[:, split], axis=0)
    acc = float(np.mean(pred == graph.labels[split]))
    return loss, acc


def summarize(history: list[MetricsRecord]) -> RunSummary:
    """Best-validation-epoch summary of a run's metric history (ties earliest)."""
    best_val = -1.0
    best_epoch = -1
    best_test = 0.0
    for rec in history:
        if rec.val_accuracy is not None and rec.val_accuracy > best_val:
            best_val = rec.val_accuracy
            best_epoch = rec.epoch
            best_test = rec.test_accuracy if rec.test_accuracy is not None else 0.0
    if best_epoch < 0:
        raise ValueError("history contains no evaluated epochs")
    return RunSummary(
        best_val_epoch=best_epoch, best_val_accuracy=best_val, test_accuracy=best_test
    )


def train(graph: GraphBundle, config: TrainConfig) -> tuple[ModelState, list[MetricsRecord]]:
    """Run the full loop; returns the best-validation model and the history."""
    config.validate()
    dtype = np.float64 if config.dtype == "float64" else np.float32
    rng = np.random.default_rng(config.seed)
    scheme = InitScheme(config.init, config.seed)
    model = build_model(
        config.num_layers,
        graph.num_features,
        config.hidden_dim,
        graph.num_classes,
        scheme,
        graph,
        skip_mode=config.skip_mode,
        alpha=config.alpha,
        skip_source=config.skip_source,
        use_bias=config.bias,
        rng=rng,
        dtype=dtype,
    )
    op = build_propagation_operator(graph)
    if dtype is not np.float64:
        op = PropagationOperator(matrix=op.matrix.astype(dtype))
    X = graph.features.astype(dtype, copy=False)
    rewire: RewiringState | None = None
    if config.skip_mode == "dynamic":
        rewire = RewiringState(
            num_layers=config.num_layers,
            alpha=config.alpha,
            p_threshold=config.p_threshold,
            skip_source=config.skip_source,
        )

    history: list[MetricsRecord] = []
    best_val = -1.0
    best_weights: list[np.ndarray] | None = None
    best_biases: list[np.ndarray] | None = None
    best_flags: list[bool] | None = None
    events_cursor = 0

    for epoch in range(1, config.epochs + 1):
        logits, tape = gcn_forward(
            model, op, X, mode="train", rng=rng, dropout=config.dropout
        )
        train_loss, dlogits = softmax_cross_entropy(
            logits, graph.labels, graph.train_idx
        )
        grads: GradientSet = gcn_backward(model, op, tape, dlogits)
        flow = gradient_flow(grads, p=config.flow_norm)

        epoch_events: list[dict] = []
        if rewire is not None:
            if epoch == 1:
                record_baseline(rewire, flow)
            else:
                update_skips(rewire, flow, epoch)
                epoch_events = rewire.activation_log[events_cursor:]
                events_cursor = len(rewire.activation_log)
                model.skip_flags = list(rewire.active)

        adam_step(
            model.weights,
            grads.layers,
            (model.adam_m, model.adam_v),
            epoch,
            config.lr,
            weight_decay=config.weight_decay,
        )
        if model.biases is not None:
            # biases are not weights: exempt from the L2 term
            adam_step(
                model.biases,
                grads.bias_layers,
                (model.adam_bm, model.adam_bv),
                epoch,
                config.lr,
            )

        record = MetricsRecord(
            epoch=epoch, train_loss=train_loss, flow=flow, skip_events=epoch_events
        )
        want_eval = epoch % config.eval_stride == 0 or epoch == config.epochs
        want_energy = config.energy_stride > 0 and epoch % config.energy_stride == 0
        if want_eval or want_energy:
            eval_logits, eval_tape = gcn_forward(model, op, X, mode="eval")
            if want_energy:
                record.energy = energy_report(eval_tape.outputs, graph)
            if want_eval:
                record.val_loss, record.val_accuracy = evaluate(
                    model, graph, graph.val_idx, op=op, logits=eval_logits
                )
                _, record.test_accuracy = evaluate(
                    model, graph, graph.test_idx, op=op, logits=eval_logits
                )
                if record.val_accuracy > best_val:
                    best_val = record.val_accuracy
                    best_weights = [w.copy() for w in model.weights]
                    if model.biases is not None:
                        best_biases = [b.copy() for b in model.biases]
                    best_flags = list(model.skip_flags)
        history.append(record)

    assert best_weights is not None and best_flags is not None
    model.weights = best_weights
    if model.biases is not None:
        model.biases = best_biases
    model.skip_flags = best_flags
    return model, history


def seed_sweep(
    graph: GraphBundle, config: TrainConfig, seeds: list[int]
) -> list[RunSummary]:
    """Train one run per seed with otherwise identical settings."""
    out = []
    for s in seeds:
        cfg = dataclasses.replace(config, seed=s)
        _, history = train(graph, cfg)
        out.append(summarize(history))
    return out


def write_metrics_jsonl(
    path: str | Path,
    history: list[MetricsRecord],
    run_manifest: dict | None = None,
) -> None:
    """JSON-lines metrics file: a manifest line (the only place a timestamp
    may appear), one object per epoch, and a final best-val summary object."""
    summary = summarize(history)
    with open(path, "w", encoding="utf-8") as f:
        if run_manifest is not None:
            f.write(json.dumps({"type": "run_manifest", **run_manifest}) + "\n")
        for rec in history:
            f.write(json.dumps({"type": "epoch", **rec.to_json_dict()}) + "\n")
        f.write(
            json.dumps(
                {
                    "type": "summary",
                    "best_val_epoch": summary.best_val_epoch,
                    "best_val_accuracy": summary.best_val_accuracy,
                    "test_accuracy": summary.test_accuracy,
                }
            )
            + "\n"
        )
