"""Per-sequence feature extraction with an optional on-disk cache."""

from __future__ import annotations

import logging
from pathlib import Path

from .audio import extract_audio_features
from .errors import DimensionError
from .features import is_cached, load_features, save_features
from .media import load_media
from .video import extract_video_features

log = logging.getLogger(__name__)


def extract_media(media, source_id: str = ""):
    """(video 90-by-m, audio 25-by-m) feature matrices of decoded media."""
    video = extract_video_features(media, source_id=source_id)
    audio = extract_audio_features(media, source_id=source_id)
    if video.m != audio.m:
        raise DimensionError(f"{source_id}: {video.m} video columns vs {audio.m} audio columns")
    return video, audio


def extract_sequence(record):
    """(video 90-by-m, audio 25-by-m) feature matrices of one manifest record."""
    return extract_media(load_media(record), record.id)


def cached_features(records, cache_dir=None) -> dict:
    """Map record id -> (video, audio) features, reusing ``cache_dir`` entries when present."""
    out = {}
    cache = Path(cache_dir) if cache_dir is not None else None
    for r in records:
        if cache is not None:
            vstem, astem = cache / f"{r.id}.video", cache / f"{r.id}.audio"
            if is_cached(vstem) and is_cached(astem):
                out[r.id] = (load_features(vstem), load_features(astem))
                continue
        video, audio = extract_sequence(r)
        if cache is not None:
            save_features(video, vstem)
            save_features(audio, astem)
        out[r.id] = (video, audio)
        log.debug("extracted %s (%d frames)", r.id, video.m)
    return out
