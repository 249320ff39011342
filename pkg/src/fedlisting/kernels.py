"""Dense/sparse numeric kernels: GNN layers, the attack MLP, and Adam.

Three graph layer kinds plus a dense layer, each with an explicit closed-form
backward pass (no autodiff).  Per-layer rules, with H the layer input:

    gcn    Z = Ahat @ H @ W + b          (Ahat = D^-1/2 (A+I) D^-1/2)
    sage   Z = [H || mean_N(H)] @ W + b  (neighbor mean over A, no self-loop;
                                          isolated nodes contribute zeros)
    gin    Z = relu(((1+eps) H + A @ H) @ W + b), eps fixed at 0
    dense  Z = H @ W + b

Client GNNs are two layers with a ReLU in between and raw logits out; the
attack MLP is three dense layers.  All kernels are deterministic and compute
in the dtype of the parameters (float32 in production, float64 in the
finite-difference tests).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graphs import Graph, mean_adjacency, normalize_adjacency

GNN_ARCHS = ("gcn", "sage", "gin")
LAYER_KINDS = ("gcn", "sage", "gin", "dense")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class LayerParams:
    kind: str
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray    # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "LayerParams":
        return LayerParams(self.kind, self.weight.copy(), self.bias.copy())


@dataclass
class ModelParams:
    layers: list
    arch: str

    def copy(self) -> "ModelParams":
        return ModelParams([l.copy() for l in self.layers], self.arch)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            [LayerParams(l.kind, l.weight.astype(dtype), l.bias.astype(dtype))
             for l in self.layers],
            self.arch,
        )

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def glorot_init(rng: np.random.Generator, in_dim: int, out_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(in_dim, out_dim)).astype(np.float32)


def init_gnn_params(arch: str, in_dim: int, hidden_dim: int, out_dim: int, seed: int) -> ModelParams:
    """Two-layer GNN, Glorot-uniform weights, zero bias, deterministic."""
    if arch not in GNN_ARCHS:
        raise ValidationError(f"unknown architecture {arch!r}; expected one of {GNN_ARCHS}")
    rng = np.random.default_rng(seed)
    mult = 2 if arch == "sage" else 1  # sage concatenates self and neighbor-mean
    dims = [(mult * in_dim, hidden_dim), (mult * hidden_dim, out_dim)]
    layers = [
        LayerParams(arch, glorot_init(rng, di, do), np.zeros(do, dtype=np.float32))
        for di, do in dims
    ]
    return ModelParams(layers, arch)


def init_mlp_params(dims, seed: int) -> ModelParams:
    """Dense MLP over ``dims = [in, h1, ..., out]``; ReLU is applied between layers."""
    rng = np.random.default_rng(seed)
    layers = [
        LayerParams("dense", glorot_init(rng, di, do), np.zeros(do, dtype=np.float32))
        for di, do in zip(dims[:-1], dims[1:])
    ]
    return ModelParams(layers, "mlp")


# ---------------------------------------------------------------------------
# Propagation operators
# ---------------------------------------------------------------------------

@dataclass
class GraphOps:
    """Per-graph sparse operators for one architecture; reusable across steps."""

    arch: str
    prop: sp.csr_matrix
    prop_t: sp.csr_matrix  # transpose, same object when symmetric


def build_graph_ops(arch: str, g: Graph, ahat: sp.spmatrix | None = None) -> GraphOps:
    if arch == "gcn":
        p = ahat.tocsr() if ahat is not None else normalize_adjacency(g)
        return GraphOps(arch, p, p)
    if arch == "sage":
        p = mean_adjacency(g)
        return GraphOps(arch, p, p.T.tocsr())
    if arch == "gin":
        a = g.adjacency
        return GraphOps(arch, a, a)
    raise ValidationError(f"unknown architecture {arch!r}")


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    params: ModelParams
    ops: GraphOps | None
    layer_caches: list = field(default_factory=list)
    logits_shape: tuple = ()


def _layer_forward(layer: LayerParams, h: np.ndarray, ops: GraphOps | None,
                   output_layer: bool = False):
    if layer.kind == "gcn":
        agg = ops.prop @ h
        z = agg @ layer.weight + layer.bias
        return z, {"agg": agg}
    if layer.kind == "sage":
        neigh = ops.prop @ h
        u = np.concatenate([h, neigh], axis=1)
        z = u @ layer.weight + layer.bias
        return z, {"agg": u}
    if layer.kind == "gin":
        # the layer's single-layer MLP is linear+ReLU, except that the model's
        # output layer ends linear: ReLU-clamped logits kill the gradient of
        # every dead class (dying-ReLU on the loss) and with it the per-class
        # signal in recorded last-layer deltas
        s = h + ops.prop @ h
        pre = s @ layer.weight + layer.bias
        if output_layer:
            return pre, {"agg": s}
        return np.maximum(pre, 0), {"agg": s, "pre": pre}
    if layer.kind == "dense":
        z = h @ layer.weight + layer.bias
        return z, {"agg": h}
    raise ValidationError(f"unknown layer kind {layer.kind!r}")


def _layer_backward(layer: LayerParams, cache: dict, dz: np.ndarray, ops: GraphOps | None):
    if layer.kind == "gin" and "pre" in cache:
        dz = dz * (cache["pre"] > 0)
    agg = cache["agg"]
    dw = agg.T @ dz
    db = dz.sum(axis=0, dtype=np.float64).astype(dz.dtype)
    dagg = dz @ layer.weight.T
    if layer.kind == "gcn":
        dh = ops.prop_t @ dagg
    elif layer.kind == "sage":
        half = agg.shape[1] // 2
        dh = dagg[:, :half] + ops.prop_t @ dagg[:, half:]
    elif layer.kind == "gin":
        dh = dagg + ops.prop_t @ dagg
    else:
        dh = dagg
    return dw, db, dh


def _forward(params: ModelParams, h: np.ndarray, ops: GraphOps | None):
    cache = ForwardCache(params, ops)
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        z, lc = _layer_forward(layer, h, ops, output_layer=i == last)
        if i < last:
            lc["pre_act"] = z
            h = np.maximum(z, 0)
        else:
            h = z
        cache.layer_caches.append(lc)
    cache.logits_shape = h.shape
    return h, cache


def _backward(cache: ForwardCache, dout: np.ndarray):
    if dout.shape != cache.logits_shape:
        raise ValidationError(
            f"stale or mismatched cache: dlogits shape {dout.shape} "
            f"!= forward output shape {cache.logits_shape}"
        )
    grads = [None] * len(cache.params.layers)
    dh = dout
    last = len(cache.params.layers) - 1
    for i in range(last, -1, -1):
        lc = cache.layer_caches[i]
        if i < last:
            dh = dh * (lc["pre_act"] > 0)
        dw, db, dh = _layer_backward(cache.params.layers[i], lc, dh, cache.ops)
        grads[i] = (dw, db)
    return grads


def gnn_forward(params: ModelParams, g: Graph, ahat=None, ops: GraphOps | None = None):
    """Run the 2-layer GNN on the full graph; returns (logits N x T, cache)."""
    if ops is None:
        ops = build_graph_ops(params.arch, g, ahat)
    if params.layers[0].in_dim != g.num_features * (2 if params.arch == "sage" else 1):
        raise ValidationError(
            f"feature dim {g.num_features} incompatible with layer input "
            f"{params.layers[0].in_dim} for arch {params.arch!r}"
        )
    return _forward(params, g.features, ops)


def gnn_backward(cache: ForwardCache, dlogits: np.ndarray):
    """Gradients of the masked mean loss w.r.t. every weight and bias."""
    return _backward(cache, dlogits)


def mlp_forward(params: ModelParams, x: np.ndarray):
    """Dense MLP forward; returns (raw output, cache)."""
    return _forward(params, x, None)


def mlp_backward(cache: ForwardCache, dout: np.ndarray):
    return _backward(cache, dout)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction stabilization."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, mask):
    """Mean cross-entropy over masked rows.

    Returns (loss, dlogits) where dlogits is (softmax - onehot) / |mask| on
    masked rows and zero elsewhere.
    """
    idx = np.asarray(getattr(mask, "indices", mask), dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("empty mask")
    rows = logits[idx]
    y = np.asarray(labels, dtype=np.int64)[idx]
    probs = softmax(rows)
    picked = np.clip(probs[np.arange(idx.size), y], 1e-38, None)
    loss = float(-np.log(picked).mean(dtype=np.float64))
    drows = probs.copy()
    drows[np.arange(idx.size), y] -= 1.0
    drows /= idx.size
    dlogits = np.zeros_like(logits)
    dlogits[idx] = drows
    return loss, dlogits


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam(params: ModelParams, lr: float) -> AdamState:
    state = AdamState(lr=lr)
    for layer in params.layers:
        state.m.append((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
        state.v.append((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
    return state


def adam_step(params: ModelParams, grads, state: AdamState):
    """One Adam update with bias correction; returns new params, mutated state."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_layers = []
    for i, layer in enumerate(params.layers):
        updated = []
        for j, (value, grad) in enumerate(
            [(layer.weight, grads[i][0]), (layer.bias, grads[i][1])]
        ):
            m = state.m[i][j]
            v = state.v[i][j]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * np.square(grad)
            step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
            updated.append((value - step).astype(value.dtype))
        new_layers.append(LayerParams(layer.kind, updated[0], updated[1]))
    return ModelParams(new_layers, params.arch), state


# ---------------------------------------------------------------------------
# Flattening and checkpoints
# ---------------------------------------------------------------------------

def flatten_last_layer(params: ModelParams) -> np.ndarray:
    """Final layer as one vector: weight row-major, then bias (length in*out + out)."""
    last = params.layers[-1]
    return np.concatenate([last.weight.ravel(), last.bias])


def unflatten_last_layer(params: ModelParams, vec: np.ndarray) -> ModelParams:
    """Inverse of flatten_last_layer; returns params with the last layer replaced."""
    last = params.layers[-1]
    n_w = last.weight.size
    if vec.size != n_w + last.bias.size:
        raise ValidationError(
            f"vector length {vec.size} does not match last layer ({n_w + last.bias.size})"
        )
    w = vec[:n_w].reshape(last.weight.shape).astype(last.weight.dtype)
    b = vec[n_w:].astype(last.bias.dtype)
    out = params.copy()
    out.layers[-1] = LayerParams(last.kind, w, b)
    return out


def flatten_params(params: ModelParams) -> np.ndarray:
    """All layers as one vector (per layer: weight row-major then bias)."""
    parts = []
    for layer in params.layers:
        parts.append(layer.weight.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


def unflatten_params(params: ModelParams, vec: np.ndarray) -> ModelParams:
    layers = []
    pos = 0
    for layer in params.layers:
        n_w, n_b = layer.weight.size, layer.bias.size
        w = vec[pos:pos + n_w].reshape(layer.weight.shape).astype(layer.weight.dtype)
        pos += n_w
        b = vec[pos:pos + n_b].astype(layer.bias.dtype)
        pos += n_b
        layers.append(LayerParams(layer.kind, w, b))
    if pos != vec.size:
        raise ValidationError(f"vector length {vec.size} does not match parameters ({pos})")
    return ModelParams(layers, params.arch)


_KIND_BYTE = {kind: i for i, kind in enumerate(LAYER_KINDS)}
_BYTE_KIND = {i: kind for kind, i in _KIND_BYTE.items()}


def save_params(params: ModelParams, path) -> None:
    """Length-prefixed binary checkpoint: layer count u32, then per layer
    kind u8, in_dim u32, out_dim u32, weight f32 row-major, bias f32."""
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<I", len(params.layers)))
        for layer in params.layers:
            fh.write(struct.pack("<BII", _KIND_BYTE[layer.kind], layer.in_dim, layer.out_dim))
            fh.write(layer.weight.astype("<f4").tobytes())
            fh.write(layer.bias.astype("<f4").tobytes())


def load_params(path) -> ModelParams:
    data = Path(path).read_bytes()
    off = 0
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    layers = []
    for _ in range(count):
        kind_b, in_dim, out_dim = struct.unpack_from("<BII", data, off)
        off += 9
        n_w = in_dim * out_dim
        w = np.frombuffer(data, dtype="<f4", count=n_w, offset=off).reshape(in_dim, out_dim)
        off += 4 * n_w
        b = np.frombuffer(data, dtype="<f4", count=out_dim, offset=off)
        off += 4 * out_dim
        layers.append(LayerParams(_BYTE_KIND[kind_b], w.astype(np.float32), b.astype(np.float32)))
    arch = layers[0].kind if layers[0].kind in GNN_ARCHS else "mlp"
    return ModelParams(layers, arch)
