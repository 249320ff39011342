"""Desk-scale federated graph-learning lab.

Simulates horizontal federated GNN training (GCN / GraphSAGE / GIN with
FedAvg), records per-round last-layer gradient deltas, and mounts a
label-distribution inference attack trained on shadow federations, with
differential-privacy, noise, and compression defenses.
"""

from .attack import (
    AttackMetrics,
    AttackModel,
    AttackSample,
    LossWeights,
    build_attack_dataset,
    composite_loss,
    grid_search_weights,
    infer_distribution,
    js_divergence,
    metrics,
    random_guess_baseline,
)
from .defenses import DefenseConfig, apply_defense, compress_topk, dp_gaussian, noisy_gradient
from .errors import FormatError, ValidationError
from .federation import (
    ClientState,
    FedRunResult,
    GradientRecord,
    evaluate,
    fedavg,
    local_train,
    make_clients,
    run_federation,
)
from .graphs import (
    Graph,
    NodeSubset,
    generate_sbm,
    induced_subgraph,
    load_graph,
    mean_adjacency,
    normalize_adjacency,
    save_graph,
    subset,
)
from .harness import (
    ExperimentConfig,
    Report,
    ShadowSpec,
    config_from_json,
    default_shadow_plan,
    defense_sweep,
    emit_report,
    run_pipeline,
)
from .kernels import (
    AdamState,
    LayerParams,
    ModelParams,
    adam_step,
    flatten_last_layer,
    flatten_params,
    gnn_backward,
    gnn_forward,
    init_gnn_params,
    init_mlp_params,
    softmax_cross_entropy,
    unflatten_last_layer,
)
from .partitioning import (
    PartitionPlan,
    ScenarioSpec,
    label_distribution,
    make_target_scenario,
    partition_clients,
    split_train_aux,
)

__version__ = "0.1.0"
