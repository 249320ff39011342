"""Experiment orchestration.

The full pipeline for one configuration:

    1. split the dataset into a training pool and an auxiliary pool
    2. run every shadow federation in the plan on the auxiliary pool and
       collect (gradient record, label distribution) attack samples
    3. resolve composite-loss weights (fixed, per-dataset default, or grid)
    4. fit the attack model on the shadow samples (80/20 train/val)
    5. run the victim federation on the training pool under the target
       scenario and configured defense
    6. infer the target client's label distribution and score it against the
       ground truth and against a random-guess baseline

Shadow federations are scenario- and defense-independent, so their results
are persisted under a config-derived cache key; reruns and interrupted runs
reuse them (and a defense sweep trains the attack model only once).

Everything derives from one base seed via hierarchical hashing, so a repeated
run produces byte-identical metrics (timings live in a separate report field).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import (
    AttackModel,
    LossWeights,
    build_attack_dataset,
    grid_search_weights,
    infer_distribution,
    metrics,
    random_guess_baseline,
    samples_to_arrays,
)
from .defenses import DefenseConfig
from .errors import ValidationError
from .federation import (
    FedRunResult,
    load_gradient_records,
    make_clients,
    run_federation,
    save_fed_result,
)
from .graphs import Graph, NodeSubset, load_graph
from .partitioning import (
    PartitionPlan,
    ScenarioSpec,
    make_target_scenario,
    partition_clients,
    save_partition_manifest,
    split_train_aux,
)
from .seeding import derive_seed

KNOWN_DATASETS = ("cora", "citeseer", "pubmed", "amazon_computers")

# per-dataset shadow plans: (strategy, processes, special clients)
DEFAULT_SHADOW_PLANS = {
    "cora": [("random", 20, None), ("equal", 14, 8), ("single_class", 14, 10),
             ("missing_class", 20, 9)],
    "citeseer": [("random", 20, None), ("equal", 10, 6), ("single_class", 20, 2),
                 ("missing_class", 20, 10)],
    "pubmed": [("random", 20, None), ("equal", 10, 5), ("single_class", 16, 10),
               ("missing_class", 20, 6)],
    "amazon_computers": [("random", 20, None), ("equal", 14, 10),
                         ("single_class", 10, 10), ("missing_class", 20, 2)],
}

# grid-search optima reported for the benchmark datasets
DEFAULT_LOSS_WEIGHTS = {
    "cora": (0.0, 0.5, 0.5),
    "citeseer": (0.0, 0.5, 0.5),
    "pubmed": (0.5, 0.25, 0.25),
    "amazon_computers": (0.5, 0.25, 0.25),
}
FALLBACK_LOSS_WEIGHTS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class ShadowSpec:
    strategy: str
    processes: int
    special_count: int


def default_shadow_plan(dataset_name: str, num_clients: int, *,
                        allow_custom: bool = False) -> list:
    """The per-dataset shadow plan; unknown names need ``allow_custom``."""
    name = dataset_name.lower()
    if name not in DEFAULT_SHADOW_PLANS:
        if not allow_custom:
            raise ValidationError(
                f"no default shadow plan for dataset {dataset_name!r}; "
                f"known: {', '.join(KNOWN_DATASETS)} (pass a custom plan or allow_custom)"
            )
        warnings.warn(
            f"dataset {dataset_name!r} has no tuned shadow plan; "
            "using 20 processes per strategy with all clients special"
        )
        return [ShadowSpec(s, 20, num_clients)
                for s in ("random", "equal", "single_class", "missing_class")]
    return [
        ShadowSpec(strategy, procs, num_clients if m is None else m)
        for strategy, procs, m in DEFAULT_SHADOW_PLANS[name]
    ]


@dataclass
class ExperimentConfig:
    dataset: str
    arch: str = "gcn"
    clients: int = 10
    rounds: int = 50
    epochs: int = 1
    batch_size: int = 32
    lr: float = 0.001
    hidden_dim: int = 16
    aux_fraction: float = 0.2
    test_fraction: float = 0.1
    shadow_plan: object = "default"     # "default" or list of ShadowSpec/dicts
    # batch size inside shadow federations: "auto" picks it so shadow clients
    # take as many local steps per round as the victim's larger clients will,
    # keeping gradient records on a comparable trajectory; an int pins it.
    shadow_batch_size: object = "auto"
    scenario: ScenarioSpec = field(default_factory=lambda: ScenarioSpec("equal_proportion"))
    target_index: int = 0
    loss_weights: object = "default"    # (a,b,c), "default", or "grid"
    attack_epochs: int = 300
    attack_lr: float = 0.001
    attack_batch: int = 32
    # z-space jitter during attack training; victim records sit slightly off
    # the shadow manifold (larger clients), and the jitter bridges the gap
    attack_feature_noise: float = 1.0
    val_fraction: float = 0.2
    grid_step: float = 0.25
    grid_epochs: int | None = None
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    seed: int = 0
    repetitions: int = 3

    def __post_init__(self):
        for name in ("clients", "rounds", "batch_size", "hidden_dim",
                     "attack_epochs", "attack_batch", "repetitions"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not 0 < self.aux_fraction < 1:
            raise ValidationError("aux_fraction must be in (0, 1)")

    def resolved_plan(self, dataset_name: str) -> list:
        if self.shadow_plan == "default":
            return default_shadow_plan(dataset_name, self.clients,
                                       allow_custom=dataset_name not in KNOWN_DATASETS)
        out = []
        for entry in self.shadow_plan:
            if isinstance(entry, ShadowSpec):
                out.append(entry)
            else:
                out.append(ShadowSpec(entry["strategy"], int(entry["processes"]),
                                      int(entry.get("special_count", self.clients))))
        return out

    def resolved_weights_mode(self, dataset_name: str):
        if self.loss_weights == "grid":
            return "grid"
        if self.loss_weights == "default":
            return DEFAULT_LOSS_WEIGHTS.get(dataset_name.lower(), FALLBACK_LOSS_WEIGHTS)
        return tuple(self.loss_weights)


def config_from_json(path_or_dict) -> ExperimentConfig:
    """Build a config from a JSON file or dict; only ``dataset`` is required."""
    if isinstance(path_or_dict, (str, Path)):
        doc = json.loads(Path(path_or_dict).read_text())
    else:
        doc = dict(path_or_dict)
    if "dataset" not in doc:
        raise ValidationError("config is missing the required 'dataset' field")
    if "scenario" in doc and isinstance(doc["scenario"], dict):
        sc = doc["scenario"]
        doc["scenario"] = ScenarioSpec(
            sc.get("name", sc.get("scenario", "equal_proportion")),
            sc.get("class_choice", "random"),
            float(sc.get("dominance", 0.5)),
        )
    if "defense" in doc and isinstance(doc["defense"], dict):
        doc["defense"] = DefenseConfig(**doc["defense"])
    if "loss_weights" in doc and isinstance(doc["loss_weights"], list):
        doc["loss_weights"] = tuple(doc["loss_weights"])
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["scenario"] = dataclasses.asdict(cfg.scenario)
    doc["defense"] = dataclasses.asdict(cfg.defense)
    if isinstance(cfg.shadow_plan, list):
        doc["shadow_plan"] = [
            dataclasses.asdict(s) if isinstance(s, ShadowSpec) else s
            for s in cfg.shadow_plan
        ]
    if isinstance(doc.get("loss_weights"), tuple):
        doc["loss_weights"] = list(doc["loss_weights"])
    return doc


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class Report:
    config: dict
    loss_weights: list
    scenario: str
    repetitions: list = field(default_factory=list)  # per-rep dicts
    sweep: list = field(default_factory=list)        # defense sweep rows
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "Report":
        return Report(**doc)


def emit_report(report: Report, out_dir) -> None:
    """Write report.json, metrics.csv, and sweep.csv (when present)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "scenario", "manhattan_distance",
                         "js_divergence", "cosine_similarity"])
        for rep in report.repetitions:
            for method in ("fed_listing", "random_baseline"):
                m = rep[method]
                writer.writerow([
                    method, report.scenario,
                    repr(m["manhattan"]), repr(m["js_divergence"]), repr(m["cosine"]),
                ])
    if report.sweep:
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["defense", "setting", "repetition",
                             "final_accuracy", "attack_js"])
            for row in report.sweep:
                writer.writerow([row["defense"], repr(row["setting"]),
                                 row["repetition"], repr(row["final_accuracy"]),
                                 repr(row["attack_js"])])


def load_report(out_dir) -> Report:
    return Report.from_dict(json.loads((Path(out_dir) / "report.json").read_text()))


# ---------------------------------------------------------------------------
# Pipeline internals
# ---------------------------------------------------------------------------

def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("FEDLISTING_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _resolve_shadow_batch(cfg: ExperimentConfig, num_nodes: int, aux_size: int) -> int:
    if cfg.shadow_batch_size != "auto":
        return int(cfg.shadow_batch_size)
    train_size = num_nodes - aux_size
    test_size = max(1, int(round(cfg.test_fraction * train_size)))
    victim_budget = max(1, (train_size - test_size) // cfg.clients)
    victim_steps = max(1, -(-victim_budget // cfg.batch_size))
    shadow_budget = max(1, aux_size // cfg.clients)
    return max(1, -(-shadow_budget // victim_steps))


def _shadow_cache_key(cfg: ExperimentConfig, g: Graph, plan,
                      shadow_batch: int) -> str:
    doc = {
        "dataset": [g.name, g.num_nodes, g.num_edges, g.num_features, g.num_classes],
        "arch": cfg.arch,
        "clients": cfg.clients,
        "rounds": cfg.rounds,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "shadow_batch": shadow_batch,
        "lr": cfg.lr,
        "hidden_dim": cfg.hidden_dim,
        "aux_fraction": cfg.aux_fraction,
        "seed": cfg.seed,
        "plan": [dataclasses.asdict(s) for s in plan],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _run_one_shadow(g: Graph, aux: NodeSubset, cfg: ExperimentConfig,
                    spec: ShadowSpec, batch_size: int, proc_seed: int,
                    cache_dir: Path | None):
    if cache_dir is not None and (cache_dir / "gradients.bin").is_file():
        records, dists = load_gradient_records(cache_dir)
        return FedRunResult(None, [], records, dists, [])
    plan = PartitionPlan(spec.strategy, cfg.clients, spec.special_count, proc_seed)
    partitions = partition_clients(aux, g.labels, g.num_classes, plan)
    clients = make_clients(g, partitions, cfg.arch)
    result = run_federation(
        clients, cfg.arch, cfg.rounds, cfg.epochs, batch_size, cfg.lr,
        cfg.hidden_dim, defense=None, seed=proc_seed,
    )
    if cache_dir is not None:
        save_fed_result(result, cache_dir)
    return result


@dataclass
class _RepContext:
    rep: int
    rep_seed: int
    train: NodeSubset
    aux: NodeSubset
    test: NodeSubset
    victim_pool: NodeSubset
    model: AttackModel
    weights: LossWeights
    validation: dict


def _split_test(train: NodeSubset, fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    order = rng.permutation(train.indices)
    k = max(1, int(round(fraction * order.size)))
    test = np.sort(order[:k])
    rest = np.sort(order[k:])
    return NodeSubset(train.parent_nodes, test), NodeSubset(train.parent_nodes, rest)


def _collect_shadow_samples(cfg: ExperimentConfig, g: Graph, rep: int,
                            rep_seed: int, out_dir: Path, timings: dict):
    """Run (or reload) every shadow federation for one repetition.

    Returns (samples, train subset, aux subset, per-rep cache directory).
    """
    train, aux = split_train_aux(g, cfg.aux_fraction, derive_seed(rep_seed, "split"))
    plan = cfg.resolved_plan(g.name)
    shadow_batch = _resolve_shadow_batch(cfg, g.num_nodes, len(aux))

    t0 = time.perf_counter()
    key = _shadow_cache_key(cfg, g, plan, shadow_batch)
    cache_root = out_dir / "shadow_cache" / key / f"rep{rep}"
    tasks = []
    for spec in plan:
        for p in range(spec.processes):
            proc_seed = derive_seed(rep_seed, "shadow", spec.strategy, p)
            cache_dir = cache_root / f"{spec.strategy}_p{p:03d}"
            tasks.append((spec, proc_seed, cache_dir))
    workers = _worker_count(len(tasks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_one_shadow, g, aux, cfg, spec, shadow_batch, s, d)
                for spec, s, d in tasks
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            _run_one_shadow(g, aux, cfg, spec, shadow_batch, s, d)
            for spec, s, d in tasks
        ]
    samples = build_attack_dataset(results)
    timings[f"rep{rep}/shadow_s"] = round(time.perf_counter() - t0, 3)
    return samples, train, aux, cache_root


def _resolve_weights(cfg: ExperimentConfig, g: Graph, samples, rep_seed: int,
                     cache_root: Path | None = None) -> LossWeights:
    mode = cfg.resolved_weights_mode(g.name)
    if mode != "grid":
        return LossWeights(*mode)
    cache_file = None
    if cache_root is not None:
        sig = hashlib.sha256(json.dumps({
            "step": cfg.grid_step, "epochs": cfg.grid_epochs or cfg.attack_epochs,
            "lr": cfg.attack_lr, "batch": cfg.attack_batch,
            "val_fraction": cfg.val_fraction, "seed": derive_seed(rep_seed, "grid"),
        }, sort_keys=True).encode()).hexdigest()[:12]
        cache_file = cache_root / f"grid_{sig}.json"
        if cache_file.is_file():
            return LossWeights(*json.loads(cache_file.read_text())["loss_weights"])
    weights = grid_search_weights(
        samples, cfg.grid_step,
        epochs=cfg.grid_epochs or cfg.attack_epochs, lr=cfg.attack_lr,
        batch_size=cfg.attack_batch, seed=derive_seed(rep_seed, "grid"),
        val_fraction=cfg.val_fraction,
    )
    if cache_file is not None:
        cache_file.write_text(json.dumps({"loss_weights": list(weights.astuple())}))
    return weights


def run_grid_search(cfg: ExperimentConfig, out_dir) -> LossWeights:
    """Shadow phase (cached) + exhaustive loss-weight grid search for rep 0."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = load_graph(cfg.dataset)
    timings: dict = {}
    rep_seed = derive_seed(cfg.seed, "rep", 0)
    samples, _, _, cache_root = _collect_shadow_samples(cfg, g, 0, rep_seed, out, timings)
    weights = grid_search_weights(
        samples, cfg.grid_step,
        epochs=cfg.grid_epochs or cfg.attack_epochs, lr=cfg.attack_lr,
        batch_size=cfg.attack_batch, seed=derive_seed(rep_seed, "grid"),
        val_fraction=cfg.val_fraction,
    )
    (out / "gridsearch.json").write_text(
        json.dumps({"loss_weights": list(weights.astuple())}) + "\n"
    )
    return weights


def _prepare_rep(cfg: ExperimentConfig, g: Graph, rep: int, out_dir: Path,
                 timings: dict) -> _RepContext:
    from .attack import load_attack_model, save_attack_model

    rep_seed = derive_seed(cfg.seed, "rep", rep)
    samples, train, aux, cache_root = _collect_shadow_samples(
        cfg, g, rep, rep_seed, out_dir, timings
    )

    t0 = time.perf_counter()
    weights = _resolve_weights(cfg, g, samples, rep_seed, cache_root)
    timings[f"rep{rep}/grid_s"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    x, y = samples_to_arrays(samples)
    rng = np.random.default_rng(derive_seed(rep_seed, "attack-split"))
    order = rng.permutation(x.shape[0])
    n_val = max(1, int(round(cfg.val_fraction * x.shape[0])))
    val_idx, train_idx = order[:n_val], order[n_val:]
    attack_sig = hashlib.sha256(json.dumps({
        "weights": list(weights.astuple()), "epochs": cfg.attack_epochs,
        "lr": cfg.attack_lr, "batch": cfg.attack_batch,
        "noise": cfg.attack_feature_noise,
        "val_fraction": cfg.val_fraction, "seed": derive_seed(rep_seed, "attack"),
    }, sort_keys=True).encode()).hexdigest()[:12]
    model_dir = cache_root / f"attack_{attack_sig}"
    if (model_dir / "attack_model.bin").is_file():
        model = load_attack_model(model_dir)
    else:
        model = AttackModel(
            loss_weights=weights.astuple(), epochs=cfg.attack_epochs, lr=cfg.attack_lr,
            batch_size=cfg.attack_batch, feature_noise=cfg.attack_feature_noise,
            seed=derive_seed(rep_seed, "attack"),
        ).fit(x[train_idx], y[train_idx])
        save_attack_model(model, model_dir)
    attack_val_cs = model.score(x[val_idx], y[val_idx])
    base_cs = []
    for j, idx in enumerate(val_idx):
        guess = random_guess_baseline(g.num_classes, derive_seed(rep_seed, "val-baseline", j))
        base_cs.append(metrics(y[idx], guess).cosine)
    validation = {
        "num_val_samples": int(n_val),
        "num_samples": int(x.shape[0]),
        "attack_cosine": float(attack_val_cs),
        "baseline_cosine": float(np.mean(base_cs)),
        "degenerate_features": bool(model.degenerate_),
    }
    timings[f"rep{rep}/attack_train_s"] = round(time.perf_counter() - t0, 3)

    test, victim_pool = _split_test(train, cfg.test_fraction, derive_seed(rep_seed, "test"))
    return _RepContext(rep, rep_seed, train, aux, test, victim_pool,
                       model, weights, validation)


def _run_victim(cfg: ExperimentConfig, g: Graph, ctx: _RepContext,
                defense: DefenseConfig, manifest_path: Path | None = None):
    seed = derive_seed(ctx.rep_seed, "victim-partition")
    partitions = make_target_scenario(
        ctx.victim_pool, g.labels, g.num_classes, cfg.scenario, cfg.clients,
        cfg.target_index, seed,
    )
    if manifest_path is not None:
        save_partition_manifest(
            manifest_path, f"{cfg.scenario.scenario}/{cfg.scenario.assign}",
            seed, partitions,
        )
    clients = make_clients(g, partitions, cfg.arch)
    result = run_federation(
        clients, cfg.arch, cfg.rounds, cfg.epochs, cfg.batch_size, cfg.lr,
        cfg.hidden_dim, defense=defense, seed=derive_seed(ctx.rep_seed, "victim-run"),
        eval_graph=g, eval_mask=ctx.test,
    )
    y_true = result.distributions[cfg.target_index]
    y_hat = infer_distribution(ctx.model, result.records[cfg.target_index])
    attack_m = metrics(y_true, y_hat)
    guess = random_guess_baseline(g.num_classes, derive_seed(ctx.rep_seed, "baseline"))
    baseline_m = metrics(y_true, guess)
    return result, y_true, y_hat, attack_m, baseline_m


def _metrics_dict(m) -> dict:
    return {"manhattan": m.manhattan, "js_divergence": m.js_divergence, "cosine": m.cosine}


def run_pipeline(cfg: ExperimentConfig, out_dir) -> Report:
    """Full shadow -> attack -> victim pipeline; writes and returns the report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    t_start = time.perf_counter()
    try:
        g = load_graph(cfg.dataset)
    except Exception as exc:
        raise type(exc)(f"[stage:load] {exc}") from exc

    report = Report(
        config=config_to_dict(cfg),
        loss_weights=[],
        scenario=cfg.scenario.scenario,
        timings=timings,
    )
    for rep in range(cfg.repetitions):
        try:
            ctx = _prepare_rep(cfg, g, rep, out, timings)
        except Exception as exc:
            raise type(exc)(f"[stage:shadow/attack rep={rep}] {exc}") from exc
        try:
            t0 = time.perf_counter()
            result, y_true, y_hat, attack_m, baseline_m = _run_victim(
                cfg, g, ctx, cfg.defense,
                manifest_path=out / f"victim_partitions_rep{rep}.json",
            )
            timings[f"rep{rep}/victim_s"] = round(time.perf_counter() - t0, 3)
        except Exception as exc:
            raise type(exc)(f"[stage:victim rep={rep}] {exc}") from exc
        report.loss_weights = list(ctx.weights.astuple())
        report.repetitions.append({
            "repetition": rep,
            "fed_listing": _metrics_dict(attack_m),
            "random_baseline": _metrics_dict(baseline_m),
            "validation": ctx.validation,
            "target_distribution": [float(v) for v in y_true],
            "predicted_distribution": [float(v) for v in y_hat],
            "accuracy_curve": [float(a) for a in result.accuracies],
        })
    timings["total_s"] = round(time.perf_counter() - t_start, 3)
    emit_report(report, out)
    return report


def defense_sweep(cfg: ExperimentConfig, defenses, out_dir) -> Report:
    """Run the victim federation under each defense, reusing one attack model.

    The attack model is trained once per repetition on undefended shadow runs;
    only the victim federation changes across the grid.
    """
    if not defenses:
        raise ValidationError("defense grid is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    g = load_graph(cfg.dataset)
    report = Report(
        config=config_to_dict(cfg),
        loss_weights=[],
        scenario=cfg.scenario.scenario,
        timings=timings,
    )
    for rep in range(cfg.repetitions):
        ctx = _prepare_rep(cfg, g, rep, out, timings)
        report.loss_weights = list(ctx.weights.astuple())
        for dcfg in defenses:
            result, y_true, y_hat, attack_m, baseline_m = _run_victim(cfg, g, ctx, dcfg)
            setting = {
                "dp": dcfg.epsilon, "noise": dcfg.sigma, "compress": dcfg.alpha,
            }.get(dcfg.kind, 0.0)
            report.sweep.append({
                "defense": dcfg.kind,
                "setting": float(setting),
                "repetition": rep,
                "final_accuracy": float(result.accuracies[-1]) if result.accuracies else 0.0,
                "attack_js": attack_m.js_divergence,
                "attack_cosine": attack_m.cosine,
                "attack_manhattan": attack_m.manhattan,
            })
    emit_report(report, out)
    return report
