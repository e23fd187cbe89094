"""PCC / SCC / RMSE, sequence-level k-fold CV and distortion-grouped reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, DimensionError, ValidationError

log = logging.getLogger(__name__)

AUDIO_GROUPS = ("noise", "chop", "clip", "echo")
VIDEO_GROUPS = ("packet_loss", "frame_freezing", "bitrate")
TABLE_COLUMNS = (
    ("noise", "Noise"),
    ("chop", "Chop"),
    ("clip", "Clip"),
    ("echo", "Echo"),
    ("packet_loss", "Packet-Loss"),
    ("frame_freezing", "Frame-Freezing"),
    ("overall", "Overall"),
)
MEASURES = (("pcc", "PCC"), ("scc", "SCC"), ("rmse", "RMSE"))
MIN_GROUP = 3


def _pair(x, y, min_n: int):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_n:
        raise DegenerateInputError(f"need at least {min_n} pairs, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _pair(x, y, 3)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("correlation undefined for constant input")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    x, y = _pair(x, y, 3)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def rmse(pred, mos) -> float:
    p, m = _pair(pred, mos, 1)
    return float(np.sqrt(np.mean((p - m) ** 2)))


def kfold_split(records, k: int, seed: int = 0) -> list[list]:
    """Seeded shuffle, then contiguous partition into k folds whose sizes differ by at most 1."""
    records = list(records)
    n = len(records)
    if k < 1 or k > n:
        raise ValidationError(f"cannot make {k} folds from {n} sequences")
    order = np.random.default_rng(seed).permutation(n)
    return [[records[i] for i in chunk] for chunk in np.array_split(order, k)]


def _measures(pred, mos) -> dict:
    out = {"n": int(len(pred)), "pcc": None, "scc": None, "rmse": None}
    if len(pred) == 0:
        return out
    out["rmse"] = rmse(pred, mos)
    try:
        out["pcc"] = pearson(pred, mos)
        out["scc"] = spearman(pred, mos)
    except DegenerateInputError:
        pass
    return out


def group_members(records) -> dict[str, list[int]]:
    """Record indices per distortion label (one audio and one video group each) plus 'overall'."""
    groups: dict[str, list[int]] = {g: [] for g in AUDIO_GROUPS + VIDEO_GROUPS}
    for i, r in enumerate(records):
        if r.audio_distortion != "none":
            groups.setdefault(r.audio_distortion, []).append(i)
        if r.video_distortion != "none":
            groups.setdefault(r.video_distortion, []).append(i)
    groups["overall"] = list(range(len(records)))
    return groups


@dataclass
class EvalReport:
    """Pooled and per-fold results of one cross-validated configuration."""

    config_id: str
    per_group: dict = field(default_factory=dict)
    per_fold: list = field(default_factory=list)
    dims: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config_id": self.config_id, "dims": self.dims, "per_group": self.per_group, "per_fold": self.per_fold}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["config_id"], d["per_group"], d["per_fold"], d.get("dims", []))

    @property
    def overall(self) -> dict:
        return self.per_group["overall"]


def summarize(config_id: str, records, predictions, fold_of=None) -> EvalReport:
    """Pool held-out predictions and compute measures overall and per distortion group.

    ``fold_of`` (index -> fold number) adds per-fold entries with raw pairs.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    mos = np.array([r.mos for r in records])
    if pred.shape != mos.shape:
        raise DimensionError(f"{pred.size} predictions for {mos.size} records")
    per_group = {}
    for name, idx in group_members(records).items():
        if len(idx) < MIN_GROUP:
            if idx:
                warnings.warn(f"{config_id}: group {name!r} has only {len(idx)} sequences; reported as null", stacklevel=2)
            per_group[name] = {"n": len(idx), "pcc": None, "scc": None, "rmse": None}
            continue
        per_group[name] = _measures(pred[idx], mos[idx])
    per_fold = []
    if fold_of is not None:
        fold_of = np.asarray(fold_of)
        for f in sorted(set(fold_of.tolist())):
            idx = np.flatnonzero(fold_of == f)
            entry = _measures(pred[idx], mos[idx]) if idx.size >= MIN_GROUP else {"n": int(idx.size), "pcc": None, "scc": None, "rmse": rmse(pred[idx], mos[idx])}
            entry.update(
                fold=int(f),
                ids=[records[i].id for i in idx],
                predicted=pred[idx].tolist(),
                mos=mos[idx].tolist(),
            )
            per_fold.append(entry)
    return EvalReport(config_id, per_group, per_fold)


def evaluate(config, records, features, k: int | None = None, seed: int | None = None, folds=None) -> EvalReport:
    """k-fold CV of ``config``: train on k-1 folds, predict the held-out one, pool.

    ``features`` maps record id -> (video FeatureMatrix, audio FeatureMatrix).
    Pass ``folds`` (lists of records) to share splits between configurations.
    """
    from .model import predict_sequence, select_features, train_model

    records = list(records)
    if folds is None:
        folds = kfold_split(records, k or config.cv_k, config.seed if seed is None else seed)
    pos = {r.id: i for i, r in enumerate(records)}
    fold_of = np.full(len(records), -1)
    for f, fold in enumerate(folds):
        for r in fold:
            if fold_of[pos[r.id]] != -1:
                raise ValidationError(f"sequence {r.id} appears in more than one fold")
            fold_of[pos[r.id]] = f
    if np.any(fold_of < 0):
        raise ValidationError("folds do not cover every sequence")

    def feats(r):
        v, a = features[r.id]
        return select_features(v, a, config.feature_selection)

    preds = np.empty(len(records))
    dims = None
    for f, fold in enumerate(folds):
        test_ids = {r.id for r in fold}
        train = [(feats(r), r.mos) for r in records if r.id not in test_ids]
        model = train_model(train, config)
        if model.dims != config.chain_dims:
            raise DimensionError(f"{config.name}: model dims {model.dims} != configured {config.chain_dims}")
        dims = model.dims
        for r in fold:
            preds[pos[r.id]], _ = predict_sequence(model, feats(r))
        log.info("%s: fold %d/%d done", config.name, f + 1, len(folds))
    report = summarize(config.name, records, preds, fold_of)
    report.dims = dims
    return report


# --------------------------------------------------------------------------
# report emission


def _fmt(v) -> str:
    return "" if v is None else f"{v:.4f}"


def table_csv(reports, labels=None) -> str:
    """Table-2-shaped CSV: one block of PCC/SCC/RMSE rows per model."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Model", "Measure"] + [title for _, title in TABLE_COLUMNS])
    for rep in reports:
        label = (labels or {}).get(rep.config_id, rep.config_id)
        for key, title in MEASURES:
            row = [label, title]
            for g, _ in TABLE_COLUMNS:
                row.append(_fmt(rep.per_group.get(g, {}).get(key)))
            w.writerow(row)
    return buf.getvalue()


def folds_csv(reports) -> str:
    """Per-fold correlations for boxplots."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "fold", "n", "pcc", "scc", "rmse"])
    for rep in reports:
        for e in rep.per_fold:
            w.writerow([rep.config_id, e["fold"], e["n"], _fmt(e["pcc"]), _fmt(e["scc"]), _fmt(e["rmse"])])
    return buf.getvalue()


def predictions_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "fold", "id", "predicted", "mos"])
    for rep in reports:
        for e in rep.per_fold:
            for sid, p, m in zip(e["ids"], e["predicted"], e["mos"]):
                w.writerow([rep.config_id, e["fold"], sid, repr(float(p)), repr(float(m))])
    return buf.getvalue()
