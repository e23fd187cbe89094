"""Feature matrices and the on-disk feature cache.

Cache layout: ``<stem>.bin`` holds little-endian float64 values in
column-major order; ``<stem>.json`` is the sidecar
``{rows, cols, feature_names, extractor_version, source_id}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ValidationError

EXTRACTOR_VERSION = "avq-features-1"

N_VIDEO = 90
N_AUDIO = 25


@dataclass
class FeatureMatrix:
    """F-by-m matrix of per-frame descriptors (rows = features, columns = frames)."""

    data: np.ndarray
    feature_names: list = field(default_factory=list)
    source_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got shape {self.data.shape}")
        if self.feature_names and len(self.feature_names) != self.data.shape[0]:
            raise DimensionError(f"{len(self.feature_names)} names for {self.data.shape[0]} rows")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


class VideoFeatureMatrix(FeatureMatrix):
    def __post_init__(self):
        super().__post_init__()
        if self.rows != N_VIDEO:
            raise DimensionError(f"video feature matrix needs {N_VIDEO} rows, got {self.rows}")


@dataclass
class AudioFeatureMatrix(FeatureMatrix):
    band_centers_hz: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.rows != N_AUDIO:
            raise DimensionError(f"audio feature matrix needs {N_AUDIO} rows, got {self.rows}")
        if self.band_centers_hz is not None:
            c = np.asarray(self.band_centers_hz, dtype=np.float64)
            if c.shape != (N_AUDIO,) or np.any(np.diff(c) <= 0):
                raise ValidationError("band centers must be 25 strictly increasing values")
            self.band_centers_hz = c


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def save_features(fm: FeatureMatrix, stem) -> tuple[Path, Path]:
    """Write ``fm`` to ``<stem>.bin`` / ``<stem>.json``; returns both paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = stem.with_name(stem.name + ".bin")
    json_path = stem.with_name(stem.name + ".json")
    _atomic_write(bin_path, np.asarray(fm.data, dtype="<f8").tobytes(order="F"))
    meta = {
        "rows": fm.rows,
        "cols": fm.m,
        "feature_names": list(fm.feature_names),
        "extractor_version": EXTRACTOR_VERSION,
        "source_id": fm.source_id,
    }
    if isinstance(fm, AudioFeatureMatrix) and fm.band_centers_hz is not None:
        meta["band_centers_hz"] = fm.band_centers_hz.tolist()
    _atomic_write(json_path, (json.dumps(meta, indent=1, sort_keys=True) + "\n").encode())
    return bin_path, json_path


def load_features(stem) -> FeatureMatrix:
    """Inverse of :func:`save_features`; returns the typed matrix when rows allow."""
    stem = Path(stem)
    meta = json.loads(stem.with_name(stem.name + ".json").read_text())
    raw = np.frombuffer(stem.with_name(stem.name + ".bin").read_bytes(), dtype="<f8")
    rows, cols = meta["rows"], meta["cols"]
    if raw.size != rows * cols:
        raise DimensionError(f"cache {stem} holds {raw.size} values, sidecar says {rows}x{cols}")
    data = raw.reshape((rows, cols), order="F").astype(np.float64)
    names = meta.get("feature_names", [])
    sid = meta.get("source_id", "")
    if "band_centers_hz" in meta:
        return AudioFeatureMatrix(data, names, sid, np.asarray(meta["band_centers_hz"]))
    if rows == N_VIDEO:
        return VideoFeatureMatrix(data, names, sid)
    return FeatureMatrix(data, names, sid)


def is_cached(stem) -> bool:
    stem = Path(stem)
    if not (stem.with_name(stem.name + ".bin").exists() and stem.with_name(stem.name + ".json").exists()):
        return False
    try:
        meta = json.loads(stem.with_name(stem.name + ".json").read_text())
    except (OSError, json.JSONDecodeError):
        return False
    return meta.get("extractor_version") == EXTRACTOR_VERSION
