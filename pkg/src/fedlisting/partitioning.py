"""Node splits and client partitions.

Two jobs: carve a dataset into a training pool and an auxiliary pool
(stratified by class), and materialize per-client node sets under either a
shadow partition strategy or a victim target scenario.

Shadow strategies (each "special" client gets the strategy's distribution,
the remaining clients get random Dirichlet proportions):

    equal          classes equally represented
    random         Dirichlet(1) proportions
    single_class   special client i holds only class (i mod T)
    missing_class  random proportions with one class zeroed out

Target scenarios mirror the evaluation settings: equal_proportion,
random_split, one_class_missing, single_class_only, one_class_dominant.

Within one federation clients are pairwise disjoint; separate shadow
processes may resample the same pool.  Every returned distribution is the
realized one (actual label counts over assigned nodes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graphs import Graph, NodeSubset

STRATEGIES = ("equal", "random", "single_class", "missing_class")
SCENARIOS = (
    "equal_proportion",
    "random_split",
    "one_class_missing",
    "single_class_only",
    "one_class_dominant",
)


@dataclass(frozen=True)
class PartitionPlan:
    strategy: str
    num_clients: int
    special_count: int
    seed: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if not (1 <= self.special_count <= self.num_clients):
            raise ValidationError(
                f"special_count must be in [1, {self.num_clients}], got {self.special_count}"
            )


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    class_choice: int | str = "random"   # class index, or "random"
    dominance: float = 0.5
    # "all": every client follows the scenario's distribution family (the
    # target realizes the exact spec); "target": only the target does, the
    # rest draw random proportions.
    assign: str = "all"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if self.assign not in ("all", "target"):
            raise ValidationError(f"assign must be 'all' or 'target', got {self.assign!r}")


@dataclass(frozen=True)
class ClientPartition:
    subset: NodeSubset
    distribution: np.ndarray  # realized label proportions, float64 simplex


def label_distribution(labels, num_classes: int) -> np.ndarray:
    """Per-class proportions of a label multiset; sums to 1."""
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size == 0:
        raise ValidationError("cannot compute a distribution of zero labels")
    counts = np.bincount(arr, minlength=num_classes).astype(np.float64)
    return counts / counts.sum()


def split_train_aux(g: Graph, aux_fraction: float, seed: int):
    """Disjoint, exhaustive, class-stratified (train, aux) node split.

    Each class contributes round(aux_fraction * class_size) nodes to aux,
    so per-class aux counts stay within +/-1 of the exact fraction.
    """
    if not (0.0 < aux_fraction < 1.0):
        raise ValidationError(f"aux_fraction must be in (0, 1), got {aux_fraction}")
    rng = np.random.default_rng(seed)
    aux_parts, train_parts = [], []
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        if members.size < 2:
            raise ValidationError(f"class {c} has {members.size} nodes; need at least 2")
        order = rng.permutation(members)
        k = int(np.floor(aux_fraction * members.size + 0.5))
        aux_parts.append(order[:k])
        train_parts.append(order[k:])
    aux = np.sort(np.concatenate(aux_parts))
    train = np.sort(np.concatenate(train_parts))
    if aux.size == 0 or train.size == 0:
        raise ValidationError(
            f"split produced an empty side (aux={aux.size}, train={train.size}); "
            f"graph too small for aux_fraction={aux_fraction}"
        )
    return NodeSubset(g.num_nodes, train), NodeSubset(g.num_nodes, aux)


# ---------------------------------------------------------------------------
# Allocation machinery
# ---------------------------------------------------------------------------

class _ClassPools:
    """Mutable per-class node pools; nodes are handed out without replacement."""

    def __init__(self, pool: NodeSubset, labels: np.ndarray, num_classes: int,
                 rng: np.random.Generator):
        self.num_classes = num_classes
        self.stacks = []
        pool_labels = labels[pool.indices]
        for c in range(num_classes):
            members = pool.indices[pool_labels == c]
            self.stacks.append(list(rng.permutation(members)))

    def available(self, c: int) -> int:
        return len(self.stacks[c])

    def take(self, c: int, k: int) -> list:
        stack = self.stacks[c]
        taken, self.stacks[c] = stack[:k], stack[k:]
        return taken


def _largest_remainder(props: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, proportional to ``props``."""
    raw = props * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _realize(props: np.ndarray, budget: int, pools: _ClassPools,
             forbidden: int | None = None, strict: bool = False) -> list:
    """Draw ~budget nodes matching ``props`` from the pools.

    Classes short on nodes are compensated from the most-available allowed
    class; if every allowed pool runs dry the client simply ends up smaller.
    ``strict`` disables the compensation (the client keeps the exact support,
    possibly with fewer nodes).
    """
    counts = _largest_remainder(props, budget)
    nodes = []
    deficit = 0
    for c in range(pools.num_classes):
        want = int(counts[c])
        got = pools.take(c, min(want, pools.available(c)))
        nodes.extend(got)
        deficit += want - len(got)
    while deficit > 0 and not strict:
        avail = [
            pools.available(c) if c != forbidden else 0
            for c in range(pools.num_classes)
        ]
        c = int(np.argmax(avail))
        if avail[c] == 0:
            break
        nodes.extend(pools.take(c, 1))
        deficit -= 1
    return nodes


def _random_props(rng: np.random.Generator, num_classes: int) -> np.ndarray:
    return rng.dirichlet(np.ones(num_classes))


def _finish(parent_nodes: int, node_lists, labels, num_classes) -> list:
    out = []
    for nodes in node_lists:
        if not nodes:
            raise ValidationError("a client received zero nodes; pool too small")
        sub = NodeSubset(parent_nodes, np.sort(np.asarray(nodes, dtype=np.int64)))
        out.append(ClientPartition(sub, label_distribution(labels[sub.indices], num_classes)))
    return out


def partition_clients(pool: NodeSubset, labels: np.ndarray, num_classes: int,
                      plan: PartitionPlan) -> list:
    """Materialize one shadow federation's client node sets under ``plan``.

    Clients 0..special_count-1 carry the strategy's distribution; the rest are
    random.  Returns a list of ClientPartition, pairwise disjoint.
    """
    c_total = plan.num_clients
    t = num_classes
    required = c_total * t if plan.strategy == "equal" else c_total
    if len(pool) < required:
        raise ValidationError(
            f"pool of {len(pool)} nodes cannot host {c_total} clients "
            f"under strategy {plan.strategy!r}"
        )
    rng = np.random.default_rng(plan.seed)
    pools = _ClassPools(pool, labels, t, rng)
    budget = len(pool) // c_total
    node_lists = []

    equal_quota = None
    if plan.strategy == "equal":
        # uniform per-class quota, capped by the scarcest class
        min_avail = min(pools.available(c) for c in range(t))
        equal_quota = min(budget // t, min_avail // plan.special_count)
        if equal_quota < 1:
            raise ValidationError(
                f"cannot give {plan.special_count} clients equal class representation: "
                f"scarcest class has {min_avail} nodes"
            )

    for k in range(c_total):
        special = k < plan.special_count
        if not special:
            node_lists.append(_realize(_random_props(rng, t), budget, pools))
        elif plan.strategy == "equal":
            nodes = []
            for c in range(t):
                nodes.extend(pools.take(c, equal_quota))
            node_lists.append(nodes)
        elif plan.strategy == "random":
            node_lists.append(_realize(_random_props(rng, t), budget, pools))
        elif plan.strategy == "single_class":
            c = k % t
            take = min(budget, pools.available(c))
            if take == 0:
                raise ValidationError(
                    f"class {c} exhausted while building single-class client {k}"
                )
            node_lists.append(pools.take(c, take))
        elif plan.strategy == "missing_class":
            props = _random_props(rng, t)
            missing = int(rng.integers(t))
            props[missing] = 0.0
            props /= props.sum()
            node_lists.append(_realize(props, budget, pools, forbidden=missing))
    return _finish(pool.parent_nodes, node_lists, labels, num_classes)


def scenario_proportions(spec: ScenarioSpec, num_classes: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Target proportions realized by the victim client under ``spec``."""
    t = num_classes
    if spec.scenario == "equal_proportion":
        return np.full(t, 1.0 / t)
    if spec.scenario == "random_split":
        return _random_props(rng, t)
    chosen = spec.class_choice
    if chosen == "random":
        chosen = int(rng.integers(t))
    if not 0 <= int(chosen) < t:
        raise ValidationError(f"class choice {chosen} out of range for {t} classes")
    chosen = int(chosen)
    if spec.scenario == "one_class_missing":
        props = _random_props(rng, t)
        props[chosen] = 0.0
        return props / props.sum()
    if spec.scenario == "single_class_only":
        props = np.zeros(t)
        props[chosen] = 1.0
        return props
    # one_class_dominant
    if not (1.0 / t < spec.dominance <= 1.0):
        raise ValidationError(
            f"dominance must be in (1/{t}, 1], got {spec.dominance}"
        )
    props = np.full(t, (1.0 - spec.dominance) / (t - 1)) if t > 1 else np.array([1.0])
    props[chosen] = spec.dominance
    return props


def _peer_proportions(spec: ScenarioSpec, peer_rank: int, target_class: int,
                      num_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Distribution family for a non-target client under assign='all'."""
    t = num_classes
    if spec.scenario == "equal_proportion":
        return np.full(t, 1.0 / t)
    if spec.scenario == "random_split" or spec.scenario == "one_class_dominant":
        # no shadow analogue shapes peers in the dominant case; random matches
        return _random_props(rng, t)
    if spec.scenario == "one_class_missing":
        props = _random_props(rng, t)
        props[int(rng.integers(t))] = 0.0
        return props / props.sum()
    # single_class_only: rotate classes starting after the target's, so no
    # class collects more takers than the pools can feed
    props = np.zeros(t)
    props[(target_class + 1 + peer_rank) % t] = 1.0
    return props


def make_target_scenario(pool: NodeSubset, labels: np.ndarray, num_classes: int,
                         spec: ScenarioSpec, num_clients: int, target_index: int,
                         seed: int) -> list:
    """Victim federation partition.

    The target client always realizes the scenario's exact distribution.
    With ``spec.assign == "all"`` the remaining clients follow the same
    distribution family (mirroring the shadow strategies); with ``"target"``
    they draw random proportions.
    """
    if not 0 <= target_index < num_clients:
        raise ValidationError(f"target_index {target_index} out of range")
    if len(pool) < num_clients:
        raise ValidationError("pool smaller than the client count")
    rng = np.random.default_rng(seed)
    pools = _ClassPools(pool, labels, num_classes, rng)
    budget = len(pool) // num_clients

    target_props = scenario_proportions(spec, num_classes, rng)

    node_lists: list = [None] * num_clients
    node_lists[target_index] = _realize(
        target_props, budget, pools,
        forbidden=_zero_class(target_props), strict=_is_one_hot(target_props),
    )
    target_class = int(np.argmax(target_props))
    peer_rank = 0
    for k in range(num_clients):
        if k == target_index:
            continue
        if spec.assign == "all":
            props = _peer_proportions(spec, peer_rank, target_class, num_classes, rng)
        else:
            props = _random_props(rng, num_classes)
        peer_rank += 1
        node_lists[k] = _realize(
            props, budget, pools,
            forbidden=_zero_class(props) if spec.scenario == "one_class_missing" else None,
            strict=_is_one_hot(props),
        )
    return _finish(pool.parent_nodes, node_lists, labels, num_classes)


def _zero_class(props: np.ndarray) -> int | None:
    zeros = np.flatnonzero(props == 0.0)
    return int(zeros[0]) if zeros.size == 1 else None


def _is_one_hot(props: np.ndarray) -> bool:
    return int(np.sum(props > 0)) == 1


# ---------------------------------------------------------------------------
# Audit manifest
# ---------------------------------------------------------------------------

def save_partition_manifest(path, label: str, seed: int, partitions) -> None:
    doc = {
        "plan": label,
        "seed": seed,
        "clients": [
            {
                "nodes": p.subset.indices.tolist(),
                "distribution": p.distribution.tolist(),
            }
            for p in partitions
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_partition_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
