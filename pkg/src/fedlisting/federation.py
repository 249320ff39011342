"""Horizontal federated GNN simulation.

One federation = R communication rounds of broadcast, local Adam training,
and sample-weighted FedAvg aggregation.  After every round the server records
each client's last-layer delta

    delta_r = flatten(global_{r-1} last layer) - flatten(client_r last layer)

which forms the per-client gradient record the attack consumes.  Deltas are
kept in float64 in memory (the subtraction of float32 parameters is exact
there) and persisted as float32.

Determinism: each client's round RNG derives from (run seed, round, client),
so a parallel schedule yields the same result as a serial one.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .defenses import DefenseConfig, apply_defense
from .errors import ValidationError
from .graphs import Graph, NodeSubset, induced_subgraph
from .kernels import (
    AdamState,
    GraphOps,
    ModelParams,
    LayerParams,
    adam_step,
    build_graph_ops,
    flatten_last_layer,
    gnn_backward,
    gnn_forward,
    init_adam,
    init_gnn_params,
    softmax_cross_entropy,
)
from .seeding import derive_seed

GRADIENTS_FILE = "gradients.bin"
LABELS_DIST_FILE = "labels_dist.csv"
ACCURACY_FILE = "accuracy.csv"


@dataclass
class ClientState:
    client_id: int
    graph: Graph
    labeled: np.ndarray            # local indices of labeled nodes
    distribution: np.ndarray       # ground-truth label proportions
    ops: GraphOps
    params: ModelParams | None = None
    adam: AdamState | None = None

    @property
    def num_samples(self) -> int:
        return int(self.labeled.size)


@dataclass
class GradientRecord:
    client_id: int
    deltas: list = field(default_factory=list)  # R float64 vectors of length L

    @property
    def rounds(self) -> int:
        return len(self.deltas)

    def stacked(self) -> np.ndarray:
        return np.stack(self.deltas) if self.deltas else np.zeros((0, 0))


@dataclass
class FedRunResult:
    global_params: ModelParams
    accuracies: list                 # per-round test accuracy ([] when not evaluated)
    records: list                    # GradientRecord per client
    distributions: list              # ground-truth distribution per client
    client_sizes: list


def make_client(client_id: int, parent: Graph, subset_: NodeSubset,
                distribution: np.ndarray, arch: str) -> ClientState:
    sub = induced_subgraph(parent, subset_)
    return ClientState(
        client_id=client_id,
        graph=sub,
        labeled=np.arange(sub.num_nodes, dtype=np.int64),
        distribution=np.asarray(distribution, dtype=np.float64),
        ops=build_graph_ops(arch, sub),
    )


def make_clients(parent: Graph, partitions, arch: str) -> list:
    return [
        make_client(i, parent, part.subset, part.distribution, arch)
        for i, part in enumerate(partitions)
    ]


def _params_delta(a: ModelParams, b: ModelParams) -> ModelParams:
    """Layerwise a - b."""
    return ModelParams(
        [LayerParams(la.kind, la.weight - lb.weight, la.bias - lb.bias)
         for la, lb in zip(a.layers, b.layers)],
        a.arch,
    )


def _params_add(a: ModelParams, b: ModelParams) -> ModelParams:
    return ModelParams(
        [LayerParams(la.kind, la.weight + lb.weight, la.bias + lb.bias)
         for la, lb in zip(a.layers, b.layers)],
        a.arch,
    )


def local_train(client: ClientState, global_params: ModelParams, epochs: int,
                batch_size: int, lr: float, defense: DefenseConfig | None,
                seed: int) -> np.ndarray:
    """E epochs of mini-batch Adam from the broadcast parameters.

    Batches of labeled nodes define the loss mask; message passing always runs
    on the full client subgraph.  Returns the float64 last-layer delta
    (broadcast minus uploaded); the client keeps its trained state.
    """
    if client.labeled.size == 0:
        raise ValidationError(f"client {client.client_id} has no labeled nodes")
    params = global_params.copy()
    adam = init_adam(params, lr)
    rng = np.random.default_rng(seed)
    labels = client.graph.labels
    # the noisy-gradient defense perturbs every step's gradient before the
    # optimizer (g~ = g + N(0, sigma^2 I)); DP and compression act on the
    # uploaded parameter update instead
    noise_rng = None
    if defense is not None and defense.kind == "noise" and defense.sigma > 0:
        noise_rng = np.random.default_rng(derive_seed(seed, "defense"))
    for _ in range(epochs):
        order = rng.permutation(client.labeled)
        for start in range(0, order.size, batch_size):
            batch = order[start:start + batch_size]
            logits, cache = gnn_forward(params, client.graph, ops=client.ops)
            _, dlogits = softmax_cross_entropy(logits, labels, batch)
            grads = gnn_backward(cache, dlogits)
            if noise_rng is not None:
                grads = [
                    (dw + noise_rng.normal(0.0, defense.sigma, dw.shape).astype(dw.dtype),
                     db + noise_rng.normal(0.0, defense.sigma, db.shape).astype(db.dtype))
                    for dw, db in grads
                ]
            params, adam = adam_step(params, grads, adam)

    if defense is not None and defense.kind in ("dp", "compress"):
        update = _params_delta(params, global_params)
        defended = apply_defense(update, defense, derive_seed(seed, "defense"))
        params = _params_add(global_params, defended)

    client.params = params
    client.adam = adam
    delta = (
        flatten_last_layer(global_params).astype(np.float64)
        - flatten_last_layer(params).astype(np.float64)
    )
    return delta


def fedavg(updates) -> ModelParams:
    """Sample-weighted parameter mean: sum_k w_k theta_k / sum_k w_k.

    Accumulates in float64 and casts back to the parameter dtype.
    """
    if not updates:
        raise ValidationError("fedavg needs at least one update")
    total = float(sum(w for _, w in updates))
    if total <= 0:
        raise ValidationError("fedavg weights sum to zero")
    ref = updates[0][0]
    for params, _ in updates[1:]:
        if len(params.layers) != len(ref.layers) or any(
            p.weight.shape != r.weight.shape or p.bias.shape != r.bias.shape
            for p, r in zip(params.layers, ref.layers)
        ):
            raise ValidationError("fedavg inputs have mismatched shapes")
    layers = []
    for i, ref_layer in enumerate(ref.layers):
        w_acc = np.zeros(ref_layer.weight.shape, dtype=np.float64)
        b_acc = np.zeros(ref_layer.bias.shape, dtype=np.float64)
        for params, weight in updates:
            w_acc += weight * params.layers[i].weight.astype(np.float64)
            b_acc += weight * params.layers[i].bias.astype(np.float64)
        layers.append(
            LayerParams(
                ref_layer.kind,
                (w_acc / total).astype(ref_layer.weight.dtype),
                (b_acc / total).astype(ref_layer.bias.dtype),
            )
        )
    return ModelParams(layers, ref.arch)


def evaluate(params: ModelParams, g: Graph, mask, ops: GraphOps | None = None) -> float:
    """Fraction of masked nodes whose argmax logit matches the label.

    Ties break toward the lowest class index (argmax convention).
    """
    idx = np.asarray(getattr(mask, "indices", mask), dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("empty evaluation mask")
    logits, _ = gnn_forward(params, g, ops=ops)
    pred = np.argmax(logits[idx], axis=1)
    return float(np.mean(pred == g.labels[idx]))


def run_federation(clients, arch: str, rounds: int, epochs: int = 1,
                   batch_size: int = 32, lr: float = 0.001, hidden_dim: int = 16,
                   defense: DefenseConfig | None = None, seed: int = 0,
                   eval_graph: Graph | None = None, eval_mask=None) -> FedRunResult:
    """Simulate one full federation and collect per-client gradient records."""
    if not clients:
        raise ValidationError("need at least one client")
    feat_dim = clients[0].graph.num_features
    num_classes = clients[0].graph.num_classes
    global_params = init_gnn_params(
        arch, feat_dim, hidden_dim, num_classes, derive_seed(seed, "init")
    )
    records = [GradientRecord(c.client_id) for c in clients]
    accuracies = []
    eval_ops = build_graph_ops(arch, eval_graph) if eval_graph is not None else None

    for r in range(1, rounds + 1):
        for i, client in enumerate(clients):
            delta = local_train(
                client, global_params, epochs, batch_size, lr, defense,
                derive_seed(seed, "round", r, "client", client.client_id),
            )
            records[i].deltas.append(delta)
        global_params = fedavg([(c.params, c.num_samples) for c in clients])
        if eval_graph is not None:
            accuracies.append(evaluate(global_params, eval_graph, eval_mask, eval_ops))

    return FedRunResult(
        global_params=global_params,
        accuracies=accuracies,
        records=records,
        distributions=[c.distribution for c in clients],
        client_sizes=[c.num_samples for c in clients],
    )


# ---------------------------------------------------------------------------
# Persistence (gradients.bin + labels_dist.csv + accuracy.csv)
# ---------------------------------------------------------------------------

def save_fed_result(result: FedRunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = result.records
    n_clients = len(records)
    rounds = records[0].rounds if records else 0
    vec_len = records[0].deltas[0].size if rounds else 0
    with open(out / GRADIENTS_FILE, "wb") as fh:
        fh.write(struct.pack("<III", n_clients, rounds, vec_len))
        for rec in records:
            if rec.rounds != rounds or any(d.size != vec_len for d in rec.deltas):
                raise ValidationError("ragged gradient records cannot be persisted")
            np.stack(rec.deltas).astype("<f4").tofile(fh)
    with open(out / LABELS_DIST_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        for rec, dist in zip(records, result.distributions):
            writer.writerow([rec.client_id] + [repr(float(x)) for x in dist])
    with open(out / ACCURACY_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "accuracy"])
        for r, acc in enumerate(result.accuracies, start=1):
            writer.writerow([r, repr(float(acc))])


def load_gradient_records(out_dir):
    """Load persisted records; returns (records, distributions).

    Values round-trip through float32, matching what the attack features use.
    """
    out = Path(out_dir)
    with open(out / GRADIENTS_FILE, "rb") as fh:
        n_clients, rounds, vec_len = struct.unpack("<III", fh.read(12))
        data = np.fromfile(fh, dtype="<f4", count=n_clients * rounds * vec_len)
    if data.size != n_clients * rounds * vec_len:
        raise ValidationError(f"truncated {out / GRADIENTS_FILE}")
    data = data.reshape(n_clients, rounds, vec_len).astype(np.float64)
    distributions = []
    ids = []
    with open(out / LABELS_DIST_FILE, newline="") as fh:
        for row in csv.reader(fh):
            ids.append(int(row[0]))
            distributions.append(np.array([float(x) for x in row[1:]], dtype=np.float64))
    records = [
        GradientRecord(cid, [data[i, r] for r in range(rounds)])
        for i, cid in enumerate(ids)
    ]
    return records, distributions
