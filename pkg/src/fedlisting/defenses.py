"""Client-side defenses applied to parameter updates before upload.

Three mechanisms over the flattened full-model delta:

    dp        clip to an L2 ball, then Gaussian noise with
              sigma = sqrt(2 ln(1.25/delta)) / epsilon, scaled by the clip
              norm (the mechanism's sensitivity).  ``scale_by_clip=False``
              drops the sensitivity factor.
    noise     plain additive Gaussian noise of std sigma per coordinate
    compress  keep the ceil(alpha * n) largest-magnitude entries, zero the rest

All transforms are shape-preserving and deterministic given (input, config,
seed).  The server only ever sees the defended update, so recorded gradient
deltas observe defended values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import ModelParams, flatten_params, unflatten_params

DEFENSE_KINDS = ("none", "dp", "noise", "compress")


@dataclass(frozen=True)
class DefenseConfig:
    kind: str = "none"
    epsilon: float = 1.0
    delta: float = 1e-5
    clip_norm: float = 1.0
    sigma: float = 0.0
    alpha: float = 1.0
    scale_by_clip: bool = True

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValidationError(f"unknown defense kind {self.kind!r}")
        if self.kind == "dp":
            if not self.epsilon > 0:
                raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")
            if not 0 < self.delta < 1:
                raise ValidationError(f"delta must be in (0, 1), got {self.delta}")
            if not self.clip_norm > 0:
                raise ValidationError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.kind == "noise" and self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        if self.kind == "compress" and not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")


def dp_noise_std(epsilon: float, delta: float) -> float:
    """Gaussian-mechanism noise multiplier sqrt(2 ln(1.25/delta)) / epsilon."""
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def clip_l2(update: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale into the L2 ball of radius clip_norm; vectors already inside pass through."""
    norm = float(np.linalg.norm(update.astype(np.float64)))
    if norm <= clip_norm:
        return update
    return update * (clip_norm / norm)


def dp_gaussian(update: np.ndarray, cfg: DefenseConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.kind != "dp":
        raise ValidationError(f"dp_gaussian called with kind {cfg.kind!r}")
    clipped = clip_l2(update, cfg.clip_norm)
    std = dp_noise_std(cfg.epsilon, cfg.delta)
    if cfg.scale_by_clip:
        std *= cfg.clip_norm
    return clipped + rng.normal(0.0, std, size=update.shape)


def noisy_gradient(update: np.ndarray, cfg: DefenseConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.kind != "noise":
        raise ValidationError(f"noisy_gradient called with kind {cfg.kind!r}")
    if cfg.sigma == 0.0:
        return update
    return update + rng.normal(0.0, cfg.sigma, size=update.shape)


def compress_topk(update: np.ndarray, cfg: DefenseConfig) -> np.ndarray:
    if cfg.kind != "compress":
        raise ValidationError(f"compress_topk called with kind {cfg.kind!r}")
    n = update.size
    if n == 0:
        raise ValidationError("cannot compress an empty update")
    k = int(math.ceil(cfg.alpha * n))
    if k >= n:
        return update
    # stable sort on descending magnitude: ties keep the lower index
    order = np.argsort(-np.abs(update), kind="stable")
    out = np.zeros_like(update)
    keep = order[:k]
    out[keep] = update[keep]
    return out


def apply_defense(delta: ModelParams, cfg: DefenseConfig, seed: int) -> ModelParams:
    """Run the configured transform over the flattened full-parameter delta."""
    if cfg.kind == "none":
        return delta
    flat = flatten_params(delta).astype(np.float64)
    rng = np.random.default_rng(seed)
    if cfg.kind == "dp":
        defended = dp_gaussian(flat, cfg, rng)
    elif cfg.kind == "noise":
        defended = noisy_gradient(flat, cfg, rng)
    else:
        defended = compress_topk(flat, cfg)
    return unflatten_params(delta, defended)
