"""Deep GCN training laboratory.

Full-batch transductive node classification on small citation graphs,
with topology-aware isometric weight initialization, per-layer
gradient-flow diagnostics, Dirichlet-energy tracking, and
gradient-guided dynamic rewiring of skip connections.
"""

from .autodiff import (
    GradientSet,
    TapeCache,
    gcn_backward,
    gcn_forward,
    relu,
    softmax_cross_entropy,
)
from .data_io import DataError, generate_synthetic, load_bundle, save_bundle
from .diagnostics import (
    EnergyReport,
    FlowReport,
    dirichlet_energy,
    dirichlet_energy_trace,
    energy_report,
    gradient_flow,
)
from .graph_core import (
    GraphBundle,
    GraphError,
    PropagationOperator,
    build_graph,
    build_propagation_operator,
    degree_sum_statistics,
    spmm,
)
from .initializers import InitScheme, initialize, iso_magnitude, iso_uniform_bound
from .model import (
    ModelState,
    apply_static_skip,
    build_model,
    layer_shapes,
    load_checkpoint,
    save_checkpoint,
)
from .rewiring import RewiringState, record_baseline, skip_term, update_skips
from .training import (
    MetricsRecord,
    RunSummary,
    TrainConfig,
    adam_step,
    evaluate,
    seed_sweep,
    summarize,
    train,
    write_metrics_jsonl,
)

__version__ = "0.1.0"
