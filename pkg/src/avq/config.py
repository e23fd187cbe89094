"""Declarative experiment configuration shared by training and the ablation harness."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field

from .autoencoder import TrainingHyperparams
from .errors import ValidationError

SELECTION_DIMS = {"av": 115, "video_only": 90, "audio_only": 25}
HEADS = ("softmax", "svr")


@dataclass(frozen=True)
class AblationConfig:
    """One model/experiment description.

    ``hyper`` holds autoencoder overrides (keys of TrainingHyperparams other
    than ``seed``); ``head_params`` goes to the head trainer (softmax:
    l2_weight, max_epochs, learning_rate, tolerance, score_mode; svr: C,
    epsilon, gamma, max_iter, tol).
    """

    name: str
    feature_selection: str = "av"
    dims: tuple = (60, 25)
    head: str = "softmax"
    head_params: dict = field(default_factory=dict)
    cv_k: int = 10
    seed: int = 0
    hyper: dict = field(default_factory=dict)
    n_classes: int = 4
    scaler_mode: str = "minmax01"
    aggregation: str = "mean"
    fine_tune: bool = False
    fine_tune_epochs: int = 100

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.name:
            raise ValidationError("config needs a name")
        if self.feature_selection not in SELECTION_DIMS:
            raise ValidationError(f"{self.name}: unknown feature_selection {self.feature_selection!r}")
        if self.head not in HEADS:
            raise ValidationError(f"{self.name}: unknown head {self.head!r}")
        if any(d <= 0 for d in self.dims):
            raise ValidationError(f"{self.name}: layer sizes must be positive, got {list(self.dims)}")
        if self.cv_k < 2:
            raise ValidationError(f"{self.name}: cv_k must be >= 2")
        if self.scaler_mode not in ("minmax01", "zscore"):
            raise ValidationError(f"{self.name}: unknown scaler_mode {self.scaler_mode!r}")
        if self.aggregation not in ("mean", "median"):
            raise ValidationError(f"{self.name}: unknown aggregation {self.aggregation!r}")
        if not 0 <= self.fine_tune_epochs <= 100:
            raise ValidationError(f"{self.name}: fine_tune_epochs must be within [0, 100]")
        chain = self.chain_dims
        if any(b >= a for a, b in zip(chain, chain[1:])):
            warnings.warn(f"{self.name}: layer sizes {chain} are not strictly decreasing", stacklevel=3)
        self.hyperparams(0)  # validates overrides

    @property
    def input_dim(self) -> int:
        return SELECTION_DIMS[self.feature_selection]

    @property
    def chain_dims(self) -> list[int]:
        return [self.input_dim, *self.dims]

    @property
    def label(self) -> str:
        return "-".join(str(d) for d in self.chain_dims)

    def hyperparams(self, seed_offset: int = 0) -> TrainingHyperparams:
        extra = {k: v for k, v in self.hyper.items() if k != "seed"}
        try:
            return TrainingHyperparams(seed=self.seed + seed_offset, **extra)
        except TypeError as e:
            raise ValidationError(f"{self.name}: bad autoencoder override ({e})") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AblationConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def checksum(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()
