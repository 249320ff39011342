"""Label-distribution inference from last-layer gradient records.

The attack dataset pairs one flattened gradient record per shadow client with
that client's true label proportions.  A three-layer MLP (256 and 128 hidden
units, ReLU, softmax head) regresses distributions under a composite loss

    L(Y, Yhat) = a * mean_t |y_t - yhat_t|
               + b * (Var(Y) - Var(Yhat))^2
               + c * JS(Y || Yhat)

with population variance over the T entries and base-2 Jensen-Shannon
divergence (epsilon-smoothed inside the KL terms, so JS stays in [0, 1]).

`AttackModel` follows the scikit-learn estimator protocol (fit/predict/score,
get_params/set_params) so it drops into pipelines and grid searches.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ValidationError
from .kernels import (
    adam_step,
    init_adam,
    init_mlp_params,
    mlp_backward,
    mlp_forward,
    save_params,
    load_params,
    softmax,
)
from .seeding import derive_seed
from .validation import check_matrix, check_simplex

JS_EPS = 1e-12
LN2 = float(np.log(2.0))
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    a: float
    b: float
    c: float

    def __post_init__(self):
        for name, v in (("a", self.a), ("b", self.b), ("c", self.c)):
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"loss weight {name} must be in [0, 1], got {v}")
        if self.a == self.b == self.c == 0.0:
            raise ValidationError("at least one loss weight must be nonzero")

    def astuple(self):
        return (self.a, self.b, self.c)


@dataclass(frozen=True)
class AttackSample:
    features: np.ndarray  # flattened gradient record, float32, length R*L
    target: np.ndarray    # ground-truth label distribution, float64


@dataclass(frozen=True)
class AttackMetrics:
    manhattan: float
    js_divergence: float
    cosine: float


# ---------------------------------------------------------------------------
# Divergences and the composite loss
# ---------------------------------------------------------------------------

def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise base-2 KL with epsilon smoothing inside the logs."""
    return np.sum(p * (np.log2(p + JS_EPS) - np.log2(q + JS_EPS)), axis=-1)


def js_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise base-2 Jensen-Shannon divergence; symmetric, in [0, 1]."""
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def _row_variance(x: np.ndarray) -> np.ndarray:
    return np.var(x, axis=-1)


def composite_loss(y: np.ndarray, yhat: np.ndarray, weights: LossWeights) -> float:
    """Composite distribution loss for a single (Y, Yhat) pair."""
    y = check_simplex(y, "Y")
    yhat = check_simplex(yhat, "Yhat")
    if y.shape != yhat.shape:
        raise ValidationError(f"length mismatch: {y.shape} vs {yhat.shape}")
    return float(_composite_batch(y[None, :], yhat[None, :], weights)[0])


def _composite_batch(y: np.ndarray, yhat: np.ndarray, w: LossWeights) -> np.ndarray:
    l1 = np.mean(np.abs(y - yhat), axis=-1)
    var = np.square(_row_variance(y) - _row_variance(yhat))
    js = js_divergence(y, yhat)
    return w.a * l1 + w.b * var + w.c * js


def _composite_batch_grad(y: np.ndarray, yhat: np.ndarray, w: LossWeights) -> np.ndarray:
    """d composite / d yhat, row-wise."""
    t = y.shape[-1]
    grad = np.zeros_like(yhat)
    if w.a:
        grad += (w.a / t) * np.sign(yhat - y)
    if w.b:
        var_gap = _row_variance(yhat) - _row_variance(y)
        centered = yhat - yhat.mean(axis=-1, keepdims=True)
        grad += w.b * (2.0 * var_gap)[:, None] * (2.0 / t) * centered
    if w.c:
        m = 0.5 * (y + yhat)
        grad += w.c * (
            0.5 * (np.log2(yhat + JS_EPS) - np.log2(m + JS_EPS))
            + (yhat / (yhat + JS_EPS) - m / (m + JS_EPS)) / (2.0 * LN2)
        )
    return grad


def _softmax_vjp(yhat: np.ndarray, dyhat: np.ndarray) -> np.ndarray:
    inner = np.sum(dyhat * yhat, axis=-1, keepdims=True)
    return yhat * (dyhat - inner)


# ---------------------------------------------------------------------------
# Evaluation metrics and baseline
# ---------------------------------------------------------------------------

def metrics(y, yhat) -> AttackMetrics:
    """Manhattan distance, base-2 JS divergence, and cosine similarity."""
    y = check_simplex(y, "Y")
    yhat = check_simplex(yhat, "Yhat")
    if y.shape != yhat.shape:
        raise ValidationError(f"length mismatch: {y.shape} vs {yhat.shape}")
    ny, nh = np.linalg.norm(y), np.linalg.norm(yhat)
    if ny == 0.0 or nh == 0.0:
        raise ValidationError("cosine similarity undefined for a zero vector")
    return AttackMetrics(
        manhattan=float(np.sum(np.abs(y - yhat))),
        js_divergence=float(js_divergence(y, yhat)),
        cosine=float(np.dot(y, yhat) / (ny * nh)),
    )


def random_guess_baseline(num_classes: int, seed: int) -> np.ndarray:
    """Absolute standard-normal draws, normalized onto the simplex."""
    if num_classes < 1:
        raise ValidationError("num_classes must be >= 1")
    rng = np.random.default_rng(seed)
    while True:
        draw = np.abs(rng.standard_normal(num_classes))
        total = draw.sum()
        if total > 0:
            return draw / total


# ---------------------------------------------------------------------------
# Attack dataset
# ---------------------------------------------------------------------------

def build_attack_dataset(results) -> list:
    """One AttackSample per client per shadow run; features are the
    concatenated per-round float32 deltas."""
    samples = []
    feat_len = None
    for result in results:
        for rec, dist in zip(result.records, result.distributions):
            vec = (
                np.concatenate(rec.deltas).astype(np.float32)
                if rec.deltas else np.zeros(0, dtype=np.float32)
            )
            if feat_len is None:
                feat_len = vec.size
            elif vec.size != feat_len:
                raise ValidationError(
                    f"mixed record shapes: expected {feat_len} features, got {vec.size}"
                )
            samples.append(AttackSample(vec, np.asarray(dist, dtype=np.float64)))
    return samples


def samples_to_arrays(samples):
    if not samples:
        return np.zeros((0, 0), dtype=np.float32), np.zeros((0, 0))
    x = np.stack([s.features for s in samples])
    y = np.stack([s.target for s in samples])
    return x, y


def save_attack_dataset(samples, path) -> None:
    x, y = samples_to_arrays(samples)
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<III", x.shape[0], x.shape[1], y.shape[1]))
        for i in range(x.shape[0]):
            fh.write(x[i].astype("<f4").tobytes())
            fh.write(y[i].astype("<f4").tobytes())


def load_attack_dataset(path):
    data = Path(path).read_bytes()
    n, d, t = struct.unpack_from("<III", data, 0)
    off = 12
    samples = []
    for _ in range(n):
        feats = np.frombuffer(data, dtype="<f4", count=d, offset=off).astype(np.float32)
        off += 4 * d
        target = np.frombuffer(data, dtype="<f4", count=t, offset=off).astype(np.float64)
        off += 4 * t
        samples.append(AttackSample(feats, target))
    return samples


# ---------------------------------------------------------------------------
# Estimator
# ---------------------------------------------------------------------------

class AttackModel(BaseEstimator):
    """MLP regressor from flattened gradient records to label distributions.

    Parameters
    ----------
    loss_weights : (a, b, c) weights of the L1 / variance / JS loss terms.
    hidden : hidden layer widths.
    epochs, lr, batch_size : Adam training schedule.
    unit_norm : L2-normalize each record before the per-dimension z-score.
        Gradient-delta magnitudes scale with the client's local step count, so
        records from differently sized clients land on a common scale.
    feature_noise : std (in z-score units) of Gaussian noise added to training
        features each batch; victim records come from larger clients than the
        shadow records, and the jitter keeps predictions stable slightly off
        the shadow manifold.
    seed : controls init and batch shuffling; fits are deterministic.
    """

    def __init__(self, loss_weights=(1.0, 0.0, 0.0), hidden=(256, 128),
                 epochs=300, lr=0.001, batch_size=32, unit_norm=True,
                 feature_noise=0.0, seed=0):
        self.loss_weights = loss_weights
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.unit_norm = unit_norm
        self.feature_noise = feature_noise
        self.seed = seed

    def _normalize_rows(self, X: np.ndarray) -> np.ndarray:
        if not self.unit_norm:
            return X
        norms = np.linalg.norm(X.astype(np.float64), axis=1, keepdims=True)
        return (X / np.maximum(norms, STD_FLOOR)).astype(np.float32)

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float32)
        y = check_matrix(y, "y")
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValidationError(f"X/y shapes disagree: {X.shape} vs {y.shape}")
        if X.shape[0] < 2:
            raise ValidationError("need at least 2 samples to fit")
        row_sums = y.sum(axis=1)
        if np.any(y < -1e-6) or np.any(np.abs(row_sums - 1.0) > 1e-6):
            raise ValidationError("targets must be label distributions (rows on the simplex)")
        weights = LossWeights(*self.loss_weights)

        X = self._normalize_rows(X)
        mean = X.mean(axis=0, dtype=np.float64)
        std = X.std(axis=0, dtype=np.float64)
        self.feature_mean_ = mean
        self.feature_std_ = np.maximum(std, STD_FLOOR)
        self.n_features_in_ = X.shape[1]
        self.n_classes_ = y.shape[1]
        # all-identical features with differing targets cannot be separated
        self.degenerate_ = bool(
            np.all(std < STD_FLOOR) and np.any(np.ptp(y, axis=0) > 1e-9)
        )

        xs = ((X - mean) / self.feature_std_).astype(np.float32)
        params = init_mlp_params(
            [X.shape[1], *self.hidden, y.shape[1]], derive_seed(self.seed, "attack-init")
        )
        adam = init_adam(params, self.lr)
        rng = np.random.default_rng(derive_seed(self.seed, "attack-shuffle"))
        noise_rng = np.random.default_rng(derive_seed(self.seed, "attack-noise"))
        n = xs.shape[0]
        losses = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                xb = xs[batch]
                if self.feature_noise > 0.0:
                    xb = xb + noise_rng.normal(
                        0.0, self.feature_noise, size=xb.shape
                    ).astype(np.float32)
                out, cache = mlp_forward(params, xb)
                yhat = softmax(out.astype(np.float64))
                per_row = _composite_batch(y[batch], yhat, weights)
                epoch_loss += float(per_row.sum())
                dyhat = _composite_batch_grad(y[batch], yhat, weights) / batch.size
                dout = _softmax_vjp(yhat, dyhat).astype(out.dtype)
                grads = mlp_backward(cache, dout)
                params, adam = adam_step(params, grads, adam)
            losses.append(epoch_loss / n)
        self.params_ = params
        self.loss_curve_ = losses
        return self

    def predict(self, X):
        """Predicted label distributions, one simplex row per input record."""
        if not hasattr(self, "params_"):
            raise ValidationError("model is not fitted")
        X = np.asarray(X, dtype=np.float32)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        X = self._normalize_rows(X)
        xs = ((X - self.feature_mean_) / self.feature_std_).astype(np.float32)
        out, _ = mlp_forward(self.params_, xs)
        yhat = softmax(out.astype(np.float64))
        return yhat[0] if single else yhat

    def score(self, X, y):
        """Mean cosine similarity between predictions and targets."""
        yhat = self.predict(X)
        y = np.asarray(y, dtype=np.float64)
        num = np.sum(y * yhat, axis=1)
        den = np.linalg.norm(y, axis=1) * np.linalg.norm(yhat, axis=1)
        return float(np.mean(num / den))


def infer_distribution(model: AttackModel, record) -> np.ndarray:
    """Predict a victim's label distribution from its gradient record."""
    vec = (
        np.concatenate(record.deltas).astype(np.float32)
        if hasattr(record, "deltas") else np.asarray(record, dtype=np.float32)
    )
    return model.predict(vec)


def save_attack_model(model: AttackModel, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_params(model.params_, out / "attack_model.bin")
    np.savez(
        out / "attack_scaler.npz",
        mean=model.feature_mean_,
        std=model.feature_std_,
        loss_weights=np.asarray(model.loss_weights, dtype=np.float64),
        degenerate=np.asarray([model.degenerate_]),
        unit_norm=np.asarray([model.unit_norm]),
    )


def load_attack_model(out_dir) -> AttackModel:
    out = Path(out_dir)
    params = load_params(out / "attack_model.bin")
    blob = np.load(out / "attack_scaler.npz")
    model = AttackModel(
        loss_weights=tuple(blob["loss_weights"]),
        unit_norm=bool(blob["unit_norm"][0]) if "unit_norm" in blob else True,
    )
    model.params_ = params
    model.feature_mean_ = blob["mean"]
    model.feature_std_ = blob["std"]
    model.n_features_in_ = params.layers[0].in_dim
    model.n_classes_ = params.layers[-1].out_dim
    model.degenerate_ = bool(blob["degenerate"][0]) if "degenerate" in blob else False
    return model


# ---------------------------------------------------------------------------
# Loss-weight grid search
# ---------------------------------------------------------------------------

def grid_candidates(step: float) -> list:
    inv = 1.0 / step
    if abs(inv - round(inv)) > 1e-9:
        raise ValidationError(f"step {step} must divide 1")
    values = [i * step for i in range(int(round(inv)) + 1)]
    return [
        (a, b, c)
        for a in values for b in values for c in values
        if (a, b, c) != (0.0, 0.0, 0.0)
    ]


def grid_search_weights(samples, step: float = 0.25, *, epochs: int = 300,
                        lr: float = 0.001, batch_size: int = 32, seed: int = 0,
                        val_fraction: float = 0.2) -> LossWeights:
    """Exhaustive search over the (a, b, c) grid on a fixed train/val split.

    Picks the candidate with the lowest validation composite loss; ties break
    toward higher validation cosine similarity, then lexicographic order.
    """
    x, y = samples_to_arrays(samples)
    n = x.shape[0]
    if n < 2:
        raise ValidationError("grid search needs at least 2 samples")
    rng = np.random.default_rng(derive_seed(seed, "grid-split"))
    order = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    best = None
    for triple in grid_candidates(step):
        w = LossWeights(*triple)
        model = AttackModel(
            loss_weights=triple, epochs=epochs, lr=lr,
            batch_size=batch_size, seed=seed,
        ).fit(x[train_idx], y[train_idx])
        pred = model.predict(x[val_idx])
        val_loss = float(np.mean(_composite_batch(y[val_idx], pred, w)))
        val_cs = model.score(x[val_idx], y[val_idx])
        key = (val_loss, -val_cs, triple)
        if best is None or key < best[0]:
            best = (key, w)
    return best[1]
