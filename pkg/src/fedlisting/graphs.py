"""Graph representation, on-disk dataset format, and synthetic fixtures.

A dataset directory holds four files (all little-endian):

    meta.json     {"name", "num_nodes", "num_edges", "num_features", "num_classes"}
    features.bin  num_nodes x num_features float32, row-major
    edges.bin     num_edges pairs of uint32 (u, v), one direction per undirected edge
    labels.bin    num_nodes uint32

Graphs are undirected: the loader stores each edge in both directions,
collapses duplicates, and drops self-loops.  Instances are immutable after
construction and safe to share across worker threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ValidationError
from .validation import check_node_indices

META_FILE = "meta.json"
FEATURES_FILE = "features.bin"
EDGES_FILE = "edges.bin"
LABELS_FILE = "labels.bin"


@dataclass(frozen=True)
class Graph:
    """Undirected node-labeled graph with dense float32 features."""

    num_nodes: int
    num_classes: int
    features: np.ndarray        # (N, d) float32
    adjacency: sp.csr_matrix    # (N, N) float32, symmetric, zero diagonal
    labels: np.ndarray          # (N,) int64 in [0, num_classes)
    name: str = "graph"

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2


@dataclass(frozen=True)
class NodeSubset:
    """Sorted unique node indices into a parent graph."""

    parent_nodes: int
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(
            self, "indices", check_node_indices(self.indices, self.parent_nodes)
        )

    def __len__(self) -> int:
        return int(self.indices.size)


def subset(g: Graph, indices) -> NodeSubset:
    """NodeSubset over ``g`` from any index iterable (sorted and deduplicated)."""
    arr = np.unique(np.asarray(list(indices) if not hasattr(indices, "dtype") else indices))
    return NodeSubset(g.num_nodes, arr)


def build_graph(features, labels, edges, num_classes: int, name: str = "graph") -> Graph:
    """Construct a Graph from raw arrays, symmetrizing and deduplicating edges.

    ``edges`` is an (E, 2) array; self-loops are dropped, duplicates collapsed.
    """
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if labels.shape != (n,):
        raise ValidationError(f"labels shape {labels.shape} does not match {n} nodes")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError(
            f"label {int(labels.max())} out of range for {num_classes} classes"
        )
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValidationError(
            f"edge endpoint {int(edges.max())} out of range for {n} nodes"
        )
    mask = edges[:, 0] != edges[:, 1]
    edges = edges[mask]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.size, dtype=np.float32)
    adj = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0  # collapse duplicates to unit weight
    return Graph(n, int(num_classes), features, adj, labels, name)


def is_symmetric(adj: sp.spmatrix, tol: float = 0.0) -> bool:
    diff = (adj - adj.T).tocsr()
    if diff.nnz == 0:
        return True
    return bool(np.max(np.abs(diff.data)) <= tol)


def load_graph(path) -> Graph:
    """Load a dataset directory; see module docstring for the format."""
    root = Path(path)
    meta_path = root / META_FILE
    if not meta_path.is_file():
        raise FormatError(f"missing {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed {meta_path}: {exc}") from exc
    try:
        n = int(meta["num_nodes"])
        e = int(meta["num_edges"])
        d = int(meta["num_features"])
        t = int(meta["num_classes"])
        name = str(meta.get("name", root.name))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{meta_path} missing required integer fields: {exc}") from exc

    features = _read_binary(root / FEATURES_FILE, np.float32, n * d).reshape(n, d)
    edges = _read_binary(root / EDGES_FILE, np.uint32, e * 2).reshape(e, 2)
    labels = _read_binary(root / LABELS_FILE, np.uint32, n).astype(np.int64)
    return build_graph(features, labels, edges.astype(np.int64), t, name)


def save_graph(g: Graph, path) -> None:
    """Write a Graph as a dataset directory (one stored direction per edge)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    coo = sp.triu(g.adjacency, k=1).tocoo()
    edges = np.stack([coo.row, coo.col], axis=1).astype(np.uint32)
    meta = {
        "name": g.name,
        "num_nodes": g.num_nodes,
        "num_edges": int(edges.shape[0]),
        "num_features": g.num_features,
        "num_classes": g.num_classes,
    }
    (root / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    g.features.astype("<f4").tofile(root / FEATURES_FILE)
    edges.astype("<u4").tofile(root / EDGES_FILE)
    g.labels.astype("<u4").tofile(root / LABELS_FILE)


def _read_binary(path: Path, dtype, count: int) -> np.ndarray:
    if not path.is_file():
        raise FormatError(f"missing {path}")
    raw = np.fromfile(path, dtype=np.dtype(dtype).newbyteorder("<"))
    if raw.size != count:
        raise FormatError(
            f"truncated {path}: expected {count} values of {np.dtype(dtype).name}, "
            f"got {raw.size}"
        )
    return raw.astype(dtype)


def normalize_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric normalization D^{-1/2} (A + I) D^{-1/2} with self-loops added.

    D is the degree matrix of A + I, so isolated nodes get degree 1 and the
    result has no zero rows.
    """
    a_hat = (g.adjacency + sp.identity(g.num_nodes, format="csr", dtype=np.float64)).tocsr()
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    scaled = a_hat.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :])
    return scaled.tocsr().astype(np.float32)


def mean_adjacency(g: Graph) -> sp.csr_matrix:
    """Row-normalized adjacency D^{-1} A (no self-loop); isolated rows are zero."""
    deg = np.asarray(g.adjacency.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg, dtype=np.float64), where=deg > 0)
    return g.adjacency.multiply(inv[:, None]).tocsr().astype(np.float32)


def induced_subgraph(g: Graph, s: NodeSubset) -> Graph:
    """Node-induced subgraph, relabeled 0..|s|-1 in sorted order.

    Keeps exactly the edges with both endpoints in ``s``; edges crossing the
    subset boundary are dropped.
    """
    if s.parent_nodes != g.num_nodes:
        raise ValidationError("subset does not belong to this graph")
    idx = s.indices
    if idx.size == 0:
        raise ValidationError("cannot induce a subgraph on an empty subset")
    adj = g.adjacency[idx][:, idx].tocsr()
    adj.data[:] = 1.0
    return Graph(
        num_nodes=int(idx.size),
        num_classes=g.num_classes,
        features=np.ascontiguousarray(g.features[idx]),
        adjacency=adj,
        labels=g.labels[idx].copy(),
        name=g.name,
    )


def generate_sbm(
    num_nodes: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    seed: int,
) -> Graph:
    """Stochastic-block-model fixture graph, deterministic given ``seed``.

    Classes are assigned round-robin (node i gets class i mod T).  Features
    are a one-hot class signal plus uniform noise in [0, 0.1).
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ValidationError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if num_nodes < num_classes:
        raise ValidationError("num_nodes must be >= num_classes")
    if feature_dim < 1:
        raise ValidationError("feature_dim must be >= 1")

    rng = np.random.default_rng(seed)
    labels = np.arange(num_nodes, dtype=np.int64) % num_classes

    features = rng.uniform(0.0, 0.1, size=(num_nodes, feature_dim)).astype(np.float32)
    signal = labels % feature_dim
    features[np.arange(num_nodes), signal] += 1.0

    iu, ju = np.triu_indices(num_nodes, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return build_graph(features, labels, edges, num_classes, name="sbm")
