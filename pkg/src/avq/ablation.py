"""Ablation suites: named configurations evaluated on shared folds, with resumable output.

Output layout of :func:`run_suite` under ``out_dir``::

    features/           per-sequence feature cache (<id>.video.bin/.json, <id>.audio.*)
    reports/<name>.json one EvalReport per configuration
    table2.csv          merged PCC/SCC/RMSE table (suite order)
    folds.csv           per-fold measures, for boxplots
    predictions.csv     held-out predictions
    state.json          completed configurations with checksums (for --resume)
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import AblationConfig
from .errors import AVQError, DimensionError, ValidationError
from .media import load_manifest
from .metrics import EvalReport, evaluate, folds_csv, kfold_split, predictions_csv, table_csv
from .pipeline import cached_features

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

log = logging.getLogger(__name__)

STATE_VERSION = 1


@dataclass
class AblationSuite:
    """Ordered configurations sharing one dataset split (``cv_k`` folds from ``seed``)."""

    configs: list
    cv_k: int = 10
    seed: int = 0

    def __post_init__(self):
        self.configs = list(self.configs)
        if not self.configs:
            raise ValidationError("suite has no configurations")
        names = [c.name for c in self.configs]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ValidationError(f"duplicate configuration names: {dup}")
        if self.cv_k < 2:
            raise ValidationError("cv_k must be >= 2")
        for c in self.configs:
            if c.cv_k != self.cv_k:
                raise ValidationError(f"{c.name}: cv_k={c.cv_k} differs from the suite's shared cv_k={self.cv_k}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.configs]

    def __getitem__(self, name: str) -> AblationConfig:
        for c in self.configs:
            if c.name == name:
                return c
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.configs)

    def subset(self, names) -> "AblationSuite":
        return AblationSuite([self[n] for n in names], self.cv_k, self.seed)


def builtin_presets(cv_k: int = 10, seed: int = 0) -> AblationSuite:
    """Baseline plus the eight ablation variants (layers, nodes, modality, head)."""
    spec = [
        ("Baseline", "av", (60, 25), "softmax"),
        ("Layers-0", "av", (), "softmax"),
        ("Layers-3", "av", (90, 40, 25), "softmax"),
        ("Layers-4", "av", (100, 70, 50, 25), "softmax"),
        ("Nodes-10", "av", (60, 10), "softmax"),
        ("Nodes-50", "av", (60, 50), "softmax"),
        ("VF", "video_only", (50, 20), "softmax"),
        ("AF", "audio_only", (18, 10), "softmax"),
        ("SVR", "av", (60, 25), "svr"),
    ]
    configs = [
        AblationConfig(name, feature_selection=sel, dims=dims, head=head, cv_k=cv_k, seed=seed)
        for name, sel, dims, head in spec
    ]
    return AblationSuite(configs, cv_k, seed)


def suite_from_dict(d: dict) -> AblationSuite:
    """Build a suite from parsed TOML: optional ``[suite]`` table plus ``[[config]]`` blocks."""
    head = dict(d.get("suite", {}))
    unknown = set(head) - {"cv_k", "seed", "presets"}
    if unknown:
        raise ValidationError(f"unknown [suite] keys: {sorted(unknown)}")
    cv_k = int(head.get("cv_k", 10))
    seed = int(head.get("seed", 0))
    configs = []
    if head.get("presets"):
        configs.extend(builtin_presets(cv_k, seed).configs)
    for i, block in enumerate(d.get("config", [])):
        if "name" not in block:
            raise ValidationError(f"config block {i} has no name")
        block = dict(block)
        block.setdefault("cv_k", cv_k)
        block.setdefault("seed", seed)
        configs.append(AblationConfig.from_dict(block))
    return AblationSuite(configs, cv_k, seed)


def load_suite(path) -> AblationSuite:
    """Read a TOML suite file.

    Example::

        [suite]
        cv_k = 10
        seed = 0

        [[config]]
        name = "Baseline"
        feature_selection = "av"
        dims = [60, 25]
        head = "softmax"
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ValidationError(f"cannot read suite file {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"{path}: {e}") from None
    return suite_from_dict(data)


# --------------------------------------------------------------------------
# running


@dataclass
class SuiteResult:
    reports: dict = field(default_factory=dict)  # name -> EvalReport, suite order
    failures: dict = field(default_factory=dict)  # name -> error message
    skipped: list = field(default_factory=list)  # names reused from a previous run
    out_dir: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _data_key(records, folds, suite: AblationSuite) -> str:
    """Identifies the dataset and split; a resumed run must match it."""
    payload = {
        "records": [(r.id, repr(r.mos), r.audio_distortion, r.video_distortion) for r in records],
        "folds": [[r.id for r in f] for f in folds],
        "cv_k": suite.cv_k,
        "seed": suite.seed,
    }
    return _sha256(json.dumps(payload, sort_keys=True))


def _load_state(path: Path, data_key: str) -> dict:
    if not path.exists():
        return {}
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        log.warning("unreadable state file %s; starting fresh", path)
        return {}
    if state.get("version") != STATE_VERSION or state.get("data_key") != data_key:
        log.warning("state file %s belongs to a different dataset/split; starting fresh", path)
        return {}
    return state.get("completed", {})


def _reusable(entry: dict, config: AblationConfig, report_path: Path) -> EvalReport | None:
    if entry.get("checksum") != config.checksum() or not report_path.exists():
        return None
    text = report_path.read_text(encoding="utf-8")
    if _sha256(text) != entry.get("report_sha256"):
        return None
    return EvalReport.from_dict(json.loads(text))


def _evaluate_one(config_dict: dict, records, features, folds) -> dict:
    """Worker entry point (module-level so it pickles)."""
    config = AblationConfig.from_dict(config_dict)
    report = evaluate(config, records, features, folds=folds)
    if report.dims != config.chain_dims:
        raise DimensionError(f"{config.name}: dimension chain {report.dims} != {config.chain_dims}")
    return report.to_dict()


def run_suite(suite: AblationSuite, manifest, out_dir, workers: int = 1, resume: bool = False, features=None) -> SuiteResult:
    """Evaluate every configuration of ``suite`` on the same folds and write the reports.

    ``manifest`` is a manifest path or a list of SequenceRecords. ``features``
    (id -> (video, audio)) skips extraction; otherwise features are cached in
    ``out_dir/features``. A failing configuration is recorded and the suite
    continues; check ``result.ok``.
    """
    out = Path(out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    records = load_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)
    if features is None:
        features = cached_features(records, out / "features")
    folds = kfold_split(records, suite.cv_k, suite.seed)
    data_key = _data_key(records, folds, suite)
    state_path = out / "state.json"
    completed = _load_state(state_path, data_key) if resume else {}

    result = SuiteResult(out_dir=out)
    todo = []
    for c in suite.configs:
        report_path = out / "reports" / f"{c.name}.json"
        prev = _reusable(completed.get(c.name, {}), c, report_path) if resume else None
        if prev is not None:
            result.reports[c.name] = prev
            result.skipped.append(c.name)
            log.info("%s: reusing completed report", c.name)
        else:
            completed.pop(c.name, None)
            todo.append(c)

    def record(c: AblationConfig, report_dict: dict) -> None:
        text = json.dumps(report_dict, indent=1, sort_keys=True) + "\n"
        _atomic_text(out / "reports" / f"{c.name}.json", text)
        completed[c.name] = {"checksum": c.checksum(), "report_sha256": _sha256(text)}
        state = {"version": STATE_VERSION, "data_key": data_key, "completed": completed}
        _atomic_text(state_path, json.dumps(state, indent=1, sort_keys=True) + "\n")
        result.reports[c.name] = EvalReport.from_dict(report_dict)
        log.info("%s: overall PCC %s", c.name, report_dict["per_group"]["overall"]["pcc"])

    def fail(c: AblationConfig, err: BaseException) -> None:
        result.failures[c.name] = f"{type(err).__name__}: {err}"
        log.error("%s failed: %s", c.name, result.failures[c.name])

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {c.name: pool.submit(_evaluate_one, c.to_dict(), records, features, folds) for c in todo}
            for c in todo:
                try:
                    record(c, futures[c.name].result())
                except Exception as e:  # noqa: BLE001 - isolate per configuration
                    fail(c, e)
    else:
        for c in todo:
            try:
                record(c, _evaluate_one(c.to_dict(), records, features, folds))
            except (AVQError, ArithmeticError, ValueError, RuntimeError) as e:
                fail(c, e)

    ordered = [result.reports[n] for n in suite.names if n in result.reports]
    result.reports = {r.config_id: r for r in ordered}
    labels = {c.name: f"{c.name} ({c.label})" for c in suite.configs}
    _atomic_text(out / "table2.csv", table_csv(ordered, labels))
    _atomic_text(out / "folds.csv", folds_csv(ordered))
    _atomic_text(out / "predictions.csv", predictions_csv(ordered))
    if result.failures:
        _atomic_text(out / "failures.json", json.dumps(result.failures, indent=1, sort_keys=True) + "\n")
    elif (out / "failures.json").exists():
        (out / "failures.json").unlink()
    return result
