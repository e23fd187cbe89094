"""Sparse autoencoder layers and greedy layer-wise stacking.

Each layer has a sigmoid encoder and a linear (affine) decoder. Training
minimizes

    J = (1/n) sum_i ||x_i - xhat_i||^2
        + l2_weight * (||W_enc||_F^2 + ||W_dec||_F^2)
        + sparsity_weight * sum_j KL(rho || rho_hat_j)

with full-batch Adam. Data matrices are column-major in the feature sense:
rows are features, columns are samples (video frames).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, TrainingError, ValidationError
from .optim import Adam

log = logging.getLogger(__name__)

RHO_CLAMP = 1e-6


@dataclass(frozen=True)
class TrainingHyperparams:
    """Autoencoder training settings. Defaults are the baseline metric's values."""

    l2_weight: float = 0.001
    sparsity_weight: float = 4.0
    sparsity_target: float = 0.05
    max_epochs: int = 400
    learning_rate: float = 1e-3
    tolerance: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.l2_weight < 0 or self.sparsity_weight < 0:
            raise ValidationError("l2_weight and sparsity_weight must be >= 0")
        if not 0.0 < self.sparsity_target < 1.0:
            raise ValidationError(f"sparsity_target must lie in (0, 1), got {self.sparsity_target}")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        if self.learning_rate <= 0 or self.tolerance <= 0:
            raise ValidationError("learning_rate and tolerance must be > 0")

    def to_dict(self) -> dict:
        return {
            "l2_weight": self.l2_weight,
            "sparsity_weight": self.sparsity_weight,
            "sparsity_target": self.sparsity_target,
            "max_epochs": self.max_epochs,
            "learning_rate": self.learning_rate,
            "tolerance": self.tolerance,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingHyperparams":
        return cls(**d)


def sigmoid(z):
    # split by sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def kl_divergence(rho, rho_hat):
    """Bernoulli KL divergence KL(rho || rho_hat), elementwise in rho_hat."""
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    return rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))


@dataclass
class AutoencoderLayer:
    """One sparse autoencoder: ``h = sigmoid(W_enc x + b_enc)``, ``xhat = W_dec h + b_dec``."""

    W_enc: np.ndarray
    b_enc: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    hyper: TrainingHyperparams = field(default_factory=TrainingHyperparams)
    loss_history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        h, d = self.W_enc.shape
        if self.b_enc.shape != (h,) or self.W_dec.shape != (d, h) or self.b_dec.shape != (d,):
            raise DimensionError(
                f"inconsistent layer shapes W_enc={self.W_enc.shape} b_enc={self.b_enc.shape} "
                f"W_dec={self.W_dec.shape} b_dec={self.b_dec.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W_enc.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_enc.shape[0]

    @property
    def final_loss(self) -> float | None:
        return self.loss_history[-1] if self.loss_history else None

    def params(self) -> dict[str, np.ndarray]:
        return {"W_enc": self.W_enc, "b_enc": self.b_enc, "W_dec": self.W_dec, "b_dec": self.b_dec}

    def encode(self, X):
        return encode(self, X)

    def decode(self, H):
        return decode(self, H)


def _as_matrix(X, rows: int, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != rows:
        raise DimensionError(f"{what}: expected {rows} rows, got shape {X.shape}")
    return X


def encode(layer: AutoencoderLayer, X) -> np.ndarray:
    """Map a d-by-n matrix to the h-by-n hidden code."""
    X = _as_matrix(X, layer.input_dim, "encode")
    return sigmoid(layer.W_enc @ X + layer.b_enc[:, None])


def decode(layer: AutoencoderLayer, H) -> np.ndarray:
    """Affine reconstruction of an h-by-n code."""
    H = _as_matrix(H, layer.hidden_dim, "decode")
    return layer.W_dec @ H + layer.b_dec[:, None]


def loss(layer: AutoencoderLayer, X, hyper: TrainingHyperparams | None = None):
    """Objective value and analytic gradients for every layer parameter.

    Returns ``(J, grads)`` where ``grads`` is keyed like ``layer.params()``.
    ``hyper`` overrides the layer's own hyperparameters when given.
    """
    hp = hyper or layer.hyper
    X = _as_matrix(X, layer.input_dim, "loss")
    n = X.shape[1]
    if n < 1:
        raise DimensionError("loss needs at least one sample")

    H = sigmoid(layer.W_enc @ X + layer.b_enc[:, None])
    R = layer.W_dec @ H + layer.b_dec[:, None] - X

    rho = hp.sparsity_target
    rho_raw = H.mean(axis=1)
    rho_hat = np.clip(rho_raw, RHO_CLAMP, 1.0 - RHO_CLAMP)

    J = (
        np.sum(R * R) / n
        + hp.l2_weight * (np.sum(layer.W_enc**2) + np.sum(layer.W_dec**2))
        + hp.sparsity_weight * np.sum(kl_divergence(rho, rho_hat))
    )

    dR = (2.0 / n) * R
    g_W_dec = dR @ H.T + 2.0 * hp.l2_weight * layer.W_dec
    g_b_dec = dR.sum(axis=1)

    inside = (rho_raw > RHO_CLAMP) & (rho_raw < 1.0 - RHO_CLAMP)
    d_rho = hp.sparsity_weight * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat)) * inside
    dH = layer.W_dec.T @ dR + (d_rho / n)[:, None]
    dZ = dH * H * (1.0 - H)
    g_W_enc = dZ @ X.T + 2.0 * hp.l2_weight * layer.W_enc
    g_b_enc = dZ.sum(axis=1)

    grads = {"W_enc": g_W_enc, "b_enc": g_b_enc, "W_dec": g_W_dec, "b_dec": g_b_dec}
    return float(J), grads


def init_layer(d: int, h: int, hyper: TrainingHyperparams) -> AutoencoderLayer:
    """Seeded symmetric-uniform init in [-r, r], r = sqrt(6 / (d + h)); zero biases."""
    rng = np.random.default_rng(hyper.seed)
    r = np.sqrt(6.0 / (d + h))
    W_enc = rng.uniform(-r, r, size=(h, d))
    W_dec = rng.uniform(-r, r, size=(d, h))
    return AutoencoderLayer(W_enc, np.zeros(h), W_dec, np.zeros(d), hyper)


def train_layer(X, h: int, hyper: TrainingHyperparams | None = None) -> AutoencoderLayer:
    """Train one sparse autoencoder with ``h`` hidden units on the d-by-n matrix ``X``.

    Stops when the relative objective change drops below ``hyper.tolerance`` or
    after ``hyper.max_epochs`` full-batch steps. The per-epoch objective is kept
    in ``layer.loss_history`` (last entry = final J).
    """
    hyper = hyper or TrainingHyperparams()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"train_layer expects a 2-D matrix, got shape {X.shape}")
    if h < 1:
        raise ValidationError(f"hidden size must be >= 1, got {h}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training matrix contains non-finite entries")
    d, n = X.shape
    if n < h:
        warnings.warn(f"fewer samples ({n}) than hidden units ({h})", stacklevel=2)

    layer = init_layer(d, h, hyper)
    params = layer.params()
    opt = Adam(hyper.learning_rate)
    history = []
    prev = None
    for epoch in range(hyper.max_epochs):
        J, grads = loss(layer, X)
        if not np.isfinite(J):
            raise TrainingError(f"non-finite autoencoder loss at epoch {epoch}", epoch=epoch)
        history.append(J)
        if prev is not None and abs(prev - J) < hyper.tolerance * J:
            break
        prev = J
        opt.step(params, grads)
    else:
        if hyper.max_epochs > 0:
            J, _ = loss(layer, X)
            history.append(J)
    layer.loss_history = history
    log.debug("trained %d->%d layer in %d epochs, J=%.6g", d, h, len(history), history[-1] if history else float("nan"))
    return layer


@dataclass
class EncoderChain:
    """Ordered stack of trained encoders; an empty chain is the identity map."""

    layers: list
    input_dim: int

    def __post_init__(self):
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.input_dim != dim:
                raise DimensionError(f"layer {i} expects {layer.input_dim} inputs, previous output is {dim}")
            dim = layer.hidden_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.hidden_dim for layer in self.layers]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def __len__(self):
        return len(self.layers)

    def encode(self, X, return_all: bool = False):
        """Run ``X`` through every encoder, checking each intermediate dimension."""
        X = _as_matrix(X, self.input_dim, "chain input")
        outputs = [X]
        for i, layer in enumerate(self.layers):
            X = encode(layer, X)
            if X.shape[0] != self.dims[i + 1]:
                raise DimensionError(f"layer {i} produced {X.shape[0]} rows, expected {self.dims[i + 1]}")
            outputs.append(X)
        return outputs if return_all else X


def greedy_stack(X, dims, hyper: TrainingHyperparams | None = None) -> EncoderChain:
    """Greedy layer-wise training: layer k is trained on the codes of layer k-1.

    Layer k is seeded with ``hyper.seed + k`` so that equal-shaped layers do not
    share their initialization.
    """
    hyper = hyper or TrainingHyperparams()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"greedy_stack expects a 2-D matrix, got shape {X.shape}")
    layers = []
    codes = X
    for k, h in enumerate(dims):
        layer = train_layer(codes, int(h), replace(hyper, seed=hyper.seed + k))
        layers.append(layer)
        codes = encode(layer, codes)
    return EncoderChain(layers, X.shape[0])
