"""Deployable quality metric: feature scaling -> encoder chain -> quality head.

Model files are a small binary container::

    b"AVQMODEL" | uint64 LE header length | UTF-8 JSON header | float64 LE blobs

Blob order: scaler arrays, then per layer W_enc, b_enc, W_dec, b_dec, then
the head arrays. The header lists every blob with its shape and offset.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import AutoencoderLayer, EncoderChain, TrainingHyperparams, greedy_stack
from .config import SELECTION_DIMS, AblationConfig
from .errors import DimensionError, ValidationError
from .features import FeatureMatrix
from .heads import SoftmaxHead, SvrHead, mos_to_class, one_hot, train_softmax, train_svr
from .optim import Adam

log = logging.getLogger(__name__)

MAGIC = b"AVQMODEL"
FORMAT_VERSION = 1
CLAMP_LO, CLAMP_HI = -0.5, 1.5


# --------------------------------------------------------------------------
# scaling


@dataclass
class FeatureScaler:
    """Per-row scaling fitted on training columns.

    ``minmax01`` maps each row's training range onto [0, 1] (unseen data is
    clamped to [-0.5, 1.5]); ``zscore`` standardizes. Rows with zero
    training range map to 0.5 / 0 respectively.
    """

    mode: str
    offset: np.ndarray  # row min (minmax01) or mean (zscore)
    scale: np.ndarray  # row range or std; 0 marks a constant row

    @classmethod
    def fit(cls, X, mode: str = "minmax01") -> "FeatureScaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] == 0:
            raise DimensionError(f"cannot fit a scaler on shape {X.shape}")
        if mode == "minmax01":
            lo = X.min(axis=1)
            return cls(mode, lo, X.max(axis=1) - lo)
        if mode == "zscore":
            return cls(mode, X.mean(axis=1), X.std(axis=1))
        raise ValidationError(f"unknown scaler mode {mode!r}")

    @property
    def rows(self) -> int:
        return self.offset.size

    @property
    def constant_rows(self) -> np.ndarray:
        return np.flatnonzero(self.scale == 0)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.rows:
            raise DimensionError(f"scaler fitted on {self.rows} rows, got shape {X.shape}")
        live = self.scale > 0
        out = np.empty_like(X)
        out[live] = (X[live] - self.offset[live, None]) / self.scale[live, None]
        if self.mode == "minmax01":
            out[~live] = 0.5
            np.clip(out, CLAMP_LO, CLAMP_HI, out=out)
        else:
            out[~live] = 0.0
        return out


def select_features(video=None, audio=None, selection: str = "av") -> FeatureMatrix:
    """Unscaled rows for ``selection``: video (90) above audio (25) for ``av``."""
    if selection not in SELECTION_DIMS:
        raise ValidationError(f"unknown feature selection {selection!r}")
    if selection in ("av", "video_only") and video is None:
        raise ValidationError(f"selection {selection!r} needs video features")
    if selection in ("av", "audio_only") and audio is None:
        raise ValidationError(f"selection {selection!r} needs audio features")
    if selection == "video_only":
        return FeatureMatrix(video.data, list(video.feature_names), video.source_id)
    if selection == "audio_only":
        return FeatureMatrix(audio.data, list(audio.feature_names), audio.source_id)
    if video.m != audio.m:
        raise DimensionError(f"video has {video.m} columns, audio {audio.m}")
    return FeatureMatrix(
        np.vstack([video.data, audio.data]),
        list(video.feature_names) + list(audio.feature_names),
        video.source_id or audio.source_id,
    )


def merge_and_scale(video=None, audio=None, selection: str = "av", scaler: FeatureScaler | None = None, mode: str = "minmax01"):
    """Select/concatenate rows and scale them. Returns ``(FeatureMatrix, scaler)``.

    A scaler is fitted on the given data when none is supplied.
    """
    raw = select_features(video, audio, selection)
    if scaler is None:
        scaler = FeatureScaler.fit(raw.data, mode)
    elif scaler.rows != raw.rows:
        raise DimensionError(f"scaler has {scaler.rows} rows, features {raw.rows}")
    return FeatureMatrix(scaler.transform(raw.data), raw.feature_names, raw.source_id), scaler


# --------------------------------------------------------------------------
# model


@dataclass
class StackedQualityModel:
    scaler: FeatureScaler
    chain: EncoderChain
    head: SoftmaxHead | SvrHead
    feature_selection: str = "av"
    aggregation: str = "mean"
    config: dict = field(default_factory=dict)
    version: str = __version__

    def __post_init__(self):
        expected = SELECTION_DIMS[self.feature_selection]
        if self.scaler.rows != expected or self.chain.input_dim != expected:
            raise DimensionError(
                f"{self.feature_selection} model needs {expected} inputs; scaler has {self.scaler.rows}, "
                f"chain {self.chain.input_dim}"
            )
        if self.head.input_dim != self.chain.output_dim:
            raise DimensionError(f"head expects {self.head.input_dim} inputs, chain emits {self.chain.output_dim}")

    @property
    def dims(self) -> list[int]:
        return self.chain.dims

    def encode(self, features) -> np.ndarray:
        X = features.data if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.scaler.rows:
            raise DimensionError(f"model expects {self.scaler.rows}-row features, got shape {X.shape}")
        return self.chain.encode(self.scaler.transform(X))

    def predict_frames(self, features) -> np.ndarray:
        return self.head.predict(self.encode(features))

    def aggregate(self, frame_scores) -> float:
        fs = np.asarray(frame_scores, dtype=np.float64)
        return float(np.median(fs) if self.aggregation == "median" else np.mean(fs))


def predict_sequence(model: StackedQualityModel, features) -> tuple[float, np.ndarray]:
    """Sequence score (mean or median of per-frame scores) and the per-frame scores."""
    per_frame = model.predict_frames(features)
    return model.aggregate(per_frame), per_frame


def _fine_tune(chain: EncoderChain, head: SoftmaxHead, X, T, epochs: int, lr: float, l2: float):
    """Joint cross-entropy update of encoders and softmax head (decoders untouched)."""
    layers = [
        AutoencoderLayer(L.W_enc.copy(), L.b_enc.copy(), L.W_dec, L.b_dec, L.hyper, list(L.loss_history))
        for L in chain.layers
    ]
    chain = EncoderChain(layers, chain.input_dim)
    head = SoftmaxHead(head.W.copy(), head.b.copy(), head.class_centers, head.score_mode, list(head.loss_history))
    params = {"W": head.W, "b": head.b}
    for i, L in enumerate(layers):
        params[f"W{i}"] = L.W_enc
        params[f"b{i}"] = L.b_enc
    opt = Adam(lr)
    n = X.shape[1]
    for _ in range(epochs):
        acts = chain.encode(X, return_all=True)
        Z = head.W @ acts[-1] + head.b[:, None]
        Z -= Z.max(axis=0, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=0, keepdims=True)
        dZ = (P - T) / n
        grads = {"W": dZ @ acts[-1].T + 2.0 * l2 * head.W, "b": dZ.sum(axis=1)}
        dA = head.W.T @ dZ
        for i in range(len(layers) - 1, -1, -1):
            A = acts[i + 1]
            dPre = dA * A * (1.0 - A)
            grads[f"W{i}"] = dPre @ acts[i].T
            grads[f"b{i}"] = dPre.sum(axis=1)
            dA = layers[i].W_enc.T @ dPre
        opt.step(params, grads)
    return chain, head


def train_model(train_set, config: AblationConfig) -> StackedQualityModel:
    """Fit scaler, greedy encoder stack and head on ``(FeatureMatrix, mos)`` pairs.

    Feature matrices hold the unscaled rows of ``config.feature_selection``.
    Every frame column inherits its sequence MOS as target.
    """
    if not train_set:
        raise ValidationError("empty training set")
    mats, targets = [], []
    for fm, mos in train_set:
        data = fm.data if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=np.float64)
        if data.shape[0] != config.input_dim:
            raise DimensionError(f"{config.name}: expected {config.input_dim}-row features, got {data.shape[0]}")
        mats.append(data)
        targets.append(np.full(data.shape[1], float(mos)))
    X_raw = np.hstack(mats)
    y = np.concatenate(targets)

    scaler = FeatureScaler.fit(X_raw, config.scaler_mode)
    X = scaler.transform(X_raw)
    chain = greedy_stack(X, list(config.dims), config.hyperparams())
    codes = chain.encode(X)

    hp = dict(config.head_params)
    if config.head == "softmax":
        labels = mos_to_class(y, config.n_classes)
        T = one_hot(labels, config.n_classes)
        head = train_softmax(codes, T, seed=config.seed, **hp)
        if config.fine_tune and config.dims:
            chain, head = _fine_tune(
                chain, head, X, T, config.fine_tune_epochs, hp.get("learning_rate", 1e-3), hp.get("l2_weight", 1e-4)
            )
    else:
        head = train_svr(codes, y, **hp)
        if config.fine_tune:
            log.warning("%s: fine-tuning applies to softmax heads only; skipped", config.name)
    return StackedQualityModel(scaler, chain, head, config.feature_selection, config.aggregation, config.to_dict())


# --------------------------------------------------------------------------
# serialization


def _head_parts(head):
    if isinstance(head, SoftmaxHead):
        meta = {"type": "softmax", "score_mode": head.score_mode}
        arrays = {"head.W": head.W, "head.b": head.b, "head.class_centers": head.class_centers}
    else:
        meta = {
            "type": "svr",
            "bias": head.bias,
            "gamma": head.gamma,
            "C": head.C,
            "epsilon": head.epsilon,
            "kkt_residual": head.kkt_residual,
            "iterations": head.iterations,
        }
        arrays = {"head.support_vectors": head.support_vectors, "head.coefficients": head.coefficients}
    return meta, arrays


def save_model(model: StackedQualityModel, path) -> Path:
    arrays = {"scaler.offset": model.scaler.offset, "scaler.scale": model.scaler.scale}
    for i, L in enumerate(model.chain.layers):
        arrays.update({f"layer{i}.W_enc": L.W_enc, f"layer{i}.b_enc": L.b_enc, f"layer{i}.W_dec": L.W_dec, f"layer{i}.b_dec": L.b_dec})
    head_meta, head_arrays = _head_parts(model.head)
    arrays.update(head_arrays)

    index, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        b = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    header = {
        "format": FORMAT_VERSION,
        "version": model.version,
        "feature_selection": model.feature_selection,
        "aggregation": model.aggregation,
        "dims": model.chain.dims,
        "hyper": [L.hyper.to_dict() for L in model.chain.layers],
        "seed": model.config.get("seed"),
        "scaler": {"mode": model.scaler.mode},
        "head": head_meta,
        "config": model.config,
        "arrays": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(blobs))
    tmp.replace(path)
    return path


def load_model(path) -> StackedQualityModel:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ValidationError(f"cannot read model {path}: {e}") from None
    if not raw.startswith(MAGIC):
        raise ValidationError(f"{path}: not an avq model file")
    (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(raw[start : start + hlen].decode("utf-8"))
    if header.get("format") != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported model format {header.get('format')}")
    base = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        count = entry["nbytes"] // 8
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=base + entry["offset"])
        arrays[entry["name"]] = a.reshape(entry["shape"]).astype(np.float64)

    scaler = FeatureScaler(header["scaler"]["mode"], arrays["scaler.offset"], arrays["scaler.scale"])
    layers = []
    for i, hyper in enumerate(header["hyper"]):
        layers.append(
            AutoencoderLayer(
                arrays[f"layer{i}.W_enc"],
                arrays[f"layer{i}.b_enc"],
                arrays[f"layer{i}.W_dec"],
                arrays[f"layer{i}.b_dec"],
                TrainingHyperparams.from_dict(hyper),
            )
        )
    chain = EncoderChain(layers, header["dims"][0])
    hm = header["head"]
    if hm["type"] == "softmax":
        head = SoftmaxHead(arrays["head.W"], arrays["head.b"], arrays["head.class_centers"], hm["score_mode"])
    else:
        head = SvrHead(
            arrays["head.support_vectors"],
            arrays["head.coefficients"],
            hm["bias"],
            hm["gamma"],
            hm["C"],
            hm["epsilon"],
            hm["kkt_residual"],
            hm["iterations"],
        )
    return StackedQualityModel(
        scaler, chain, head, header["feature_selection"], header["aggregation"], header.get("config", {}), header["version"]
    )
