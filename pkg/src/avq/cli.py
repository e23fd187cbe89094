"""Command-line entry point: ``avq synth-data | extract | train | predict | ablate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import AVQError, ValidationError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("avq")


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"{path}: {e}") from None


def _cmd_synth(args) -> int:
    from .synth import SynthSpec, synth_dataset

    data = _read_toml(args.spec) if args.spec else {}
    spec = SynthSpec.from_dict(data.get("synth", data))
    manifest, records = synth_dataset(spec, args.out)
    print(f"wrote {len(records)} sequences; manifest: {manifest}")
    return 0


def _cmd_extract(args) -> int:
    from .audio import extract_audio_features
    from .features import save_features
    from .media import load_manifest, load_media
    from .video import extract_video_features

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = load_manifest(args.manifest)
    for r in records:
        media = load_media(r)
        if args.modality == "video":
            fm = extract_video_features(media, source_id=r.id)
        else:
            fm = extract_audio_features(media, source_id=r.id)
        save_features(fm, out / f"{r.id}.{args.modality}")
        log.info("%s: %d x %d", r.id, fm.rows, fm.m)
    print(f"extracted {args.modality} features for {len(records)} sequences into {out}")
    return 0


def _load_config(path):
    from .config import AblationConfig

    data = _read_toml(path)
    if "config" in data:
        block = data["config"]
        if isinstance(block, list):
            if len(block) != 1:
                raise ValidationError(f"{path}: expected exactly one [[config]] block, found {len(block)}")
            block = block[0]
    else:
        block = data
    block = dict(block)
    block.setdefault("name", Path(path).stem)
    return AblationConfig.from_dict(block)


def _cmd_train(args) -> int:
    from .media import load_manifest
    from .model import save_model, select_features, train_model
    from .pipeline import cached_features

    config = _load_config(args.config)
    records = load_manifest(args.manifest)
    feats = cached_features(records, args.cache)
    train = [(select_features(*feats[r.id], config.feature_selection), r.mos) for r in records]
    model = train_model(train, config)
    save_model(model, args.out)
    print(f"trained {config.name} ({config.label}) on {len(records)} sequences; model: {args.out}")
    return 0


def _cmd_predict(args) -> int:
    from .media import load_pair
    from .model import load_model, predict_sequence, select_features
    from .pipeline import extract_media

    model = load_model(args.model)
    media = load_pair(args.video, args.audio, args.fps)
    video, audio = extract_media(media, Path(args.video).stem)
    score, per_frame = predict_sequence(model, select_features(video, audio, model.feature_selection))
    json.dump({"score": score, "per_frame_scores": per_frame.tolist()}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def _cmd_ablate(args) -> int:
    from .ablation import builtin_presets, load_suite, run_suite

    suite = builtin_presets() if args.presets else load_suite(args.suite)
    result = run_suite(suite, args.manifest, args.out, workers=args.workers, resume=args.resume)
    for name in suite.names:
        if name in result.failures:
            print(f"{name:12s} FAILED  {result.failures[name]}")
        else:
            o = result.reports[name].overall
            tag = " (reused)" if name in result.skipped else ""
            pcc = "n/a" if o["pcc"] is None else f"{o['pcc']:.4f}"
            print(f"{name:12s} PCC {pcc}  RMSE {o['rmse']:.4f}{tag}")
    print(f"reports in {result.out_dir}")
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avq", description="No-reference audio-visual quality: data, features, models, ablations.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v info, -vv debug)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", help="generate a synthetic distorted dataset")
    s.add_argument("--spec", help="TOML with SynthSpec keys (top level or [synth]); defaults if omitted")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("extract", help="extract and cache per-frame features")
    s.add_argument("--modality", choices=("video", "audio"), required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="cache directory (<id>.<modality>.bin/.json)")
    s.set_defaults(func=_cmd_extract)

    s = sub.add_parser("train", help="train one model on every sequence of a manifest")
    s.add_argument("--config", required=True, help="TOML with AblationConfig keys (top level or [config])")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="model file")
    s.add_argument("--cache", help="feature cache directory (reused and filled)")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("predict", help="score one sequence; prints JSON {score, per_frame_scores}")
    s.add_argument("--model", required=True)
    s.add_argument("--video", required=True, help=".y4m or WxH-named .yuv")
    s.add_argument("--audio", required=True, help=".wav")
    s.add_argument("--fps", type=float, help="frame rate (required for .yuv)")
    s.set_defaults(func=_cmd_predict)

    s = sub.add_parser("ablate", help="run an ablation suite with shared folds")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--suite", help="TOML suite file")
    g.add_argument("--presets", action="store_true", help="the nine built-in configurations")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--resume", action="store_true", help="skip configurations completed by a previous run")
    s.set_defaults(func=_cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AVQError as e:
        print(f"avq {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
