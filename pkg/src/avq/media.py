"""Sequence manifests and decoded media (Y4M / raw YUV video, PCM WAV audio)."""

from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import MediaError, ValidationError

AUDIO_DISTORTIONS = ("none", "noise", "chop", "clip", "echo")
VIDEO_DISTORTIONS = ("none", "packet_loss", "frame_freezing", "bitrate")

MANIFEST_FIELDS = ("id", "video_path", "audio_path", "fps", "mos", "audio_distortion", "video_distortion")
# written only for synthetic datasets
SEVERITY_FIELDS = ("audio_severity", "video_severity")


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    video_path: str
    audio_path: str
    fps: float
    mos: float
    audio_distortion: str = "none"
    video_distortion: str = "none"
    audio_severity: float | None = None
    video_severity: float | None = None

    def __post_init__(self):
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise ValidationError(f"{self.id}: fps must be > 0, got {self.fps}")
        if not (1.0 <= self.mos <= 5.0):
            raise ValidationError(f"{self.id}: mos {self.mos} outside [1, 5]")
        if self.audio_distortion not in AUDIO_DISTORTIONS:
            raise ValidationError(f"{self.id}: unknown audio distortion {self.audio_distortion!r}")
        if self.video_distortion not in VIDEO_DISTORTIONS:
            raise ValidationError(f"{self.id}: unknown video distortion {self.video_distortion!r}")
        for s in (self.audio_severity, self.video_severity):
            if s is not None and not 0.0 <= s <= 1.0:
                raise ValidationError(f"{self.id}: severity {s} outside [0, 1]")


@dataclass
class RawMedia:
    """Decoded sequence: ``frames`` is (m, height, width) uint8 luma."""

    frames: np.ndarray
    audio: np.ndarray
    sample_rate: int
    fps: float

    @property
    def m(self) -> int:
        return len(self.frames)


# --------------------------------------------------------------------------
# manifest


def _parse_row(row: dict, line: int, base: Path) -> SequenceRecord:
    def num(name):
        try:
            return float(row[name])
        except (TypeError, ValueError):
            raise ValidationError(f"manifest line {line}: field {name!r} is not a number: {row[name]!r}") from None

    for name in MANIFEST_FIELDS:
        if row.get(name) is None or (name != "id" and row[name] == ""):
            raise ValidationError(f"manifest line {line}: field {name!r} missing")
    fps = num("fps")
    mos = num("mos")
    if not 1.0 <= mos <= 5.0:
        raise ValidationError(f"manifest line {line}: field 'mos' = {mos} outside [1, 5]")
    sev = {}
    for name in SEVERITY_FIELDS:
        if row.get(name) not in (None, ""):
            sev[name] = num(name)

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else (base / p))

    try:
        return SequenceRecord(
            id=row["id"],
            video_path=resolve(row["video_path"]),
            audio_path=resolve(row["audio_path"]),
            fps=fps,
            mos=mos,
            audio_distortion=row["audio_distortion"].strip(),
            video_distortion=row["video_distortion"].strip(),
            **sev,
        )
    except ValidationError as e:
        raise ValidationError(f"manifest line {line}: {e}") from None


def load_manifest(path) -> list[SequenceRecord]:
    """Read a manifest CSV; relative media paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise MediaError(f"manifest not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header[: len(MANIFEST_FIELDS)] != MANIFEST_FIELDS or not set(header[len(MANIFEST_FIELDS) :]) <= set(SEVERITY_FIELDS):
            raise ValidationError(f"manifest header must be {','.join(MANIFEST_FIELDS)}; got {','.join(header)}")
        records = []
        for row in reader:
            if None in row:
                raise ValidationError(f"manifest line {reader.line_num}: too many fields")
            records.append(_parse_row(row, reader.line_num, path.parent))
    return records


def _fmt(x: float) -> str:
    return repr(float(x))


def write_manifest(records, path, relative_to=None) -> Path:
    """Write records as manifest CSV (severity columns only when any record has them)."""
    path = Path(path)
    with_sev = any(r.audio_severity is not None or r.video_severity is not None for r in records)
    fields = MANIFEST_FIELDS + (SEVERITY_FIELDS if with_sev else ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in records:
        vp, ap = r.video_path, r.audio_path
        if relative_to is not None:
            vp = str(Path(vp).relative_to(relative_to)) if Path(vp).is_absolute() else vp
            ap = str(Path(ap).relative_to(relative_to)) if Path(ap).is_absolute() else ap
        row = [r.id, vp, ap, _fmt(r.fps), _fmt(r.mos), r.audio_distortion, r.video_distortion]
        if with_sev:
            row += ["" if s is None else _fmt(s) for s in (r.audio_severity, r.video_severity)]
        w.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# video


def _chroma_bytes(w: int, h: int, colorspace: str) -> int:
    cw, ch = (w + 1) // 2, (h + 1) // 2
    if colorspace.startswith("mono"):
        return 0
    if colorspace.startswith("444"):
        return 2 * w * h
    if colorspace.startswith("422"):
        return 2 * cw * h
    if colorspace.startswith("420"):
        return 2 * cw * ch
    raise MediaError(f"unsupported Y4M colorspace {colorspace!r}")


def read_y4m(path) -> tuple[np.ndarray, float | None]:
    """Luma planes of an 8-bit Y4M file and its frame rate (None if absent)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if not raw.startswith(b"YUV4MPEG2") or nl < 0:
        raise MediaError(f"{path}: not a YUV4MPEG2 stream")
    params = {}
    for tok in raw[9:nl].decode("ascii").split():
        params[tok[0]] = tok[1:]
    try:
        w, h = int(params["W"]), int(params["H"])
    except KeyError:
        raise MediaError(f"{path}: Y4M header lacks W/H") from None
    cs = params.get("C", "420jpeg")
    if cs.endswith(("p10", "p12", "p16")):
        raise MediaError(f"{path}: only 8-bit Y4M is supported")
    fps = None
    if "F" in params:
        num, den = params["F"].split(":")
        fps = int(num) / int(den)
    luma = w * h
    frame_bytes = luma + _chroma_bytes(w, h, cs)
    frames = []
    pos = nl + 1
    while pos < len(raw):
        end = raw.find(b"\n", pos)
        if end < 0 or not raw.startswith(b"FRAME", pos):
            raise MediaError(f"{path}: corrupt frame header at byte {pos}")
        start = end + 1
        if start + frame_bytes > len(raw):
            raise MediaError(f"{path}: truncated frame {len(frames)}")
        frames.append(np.frombuffer(raw, dtype=np.uint8, count=luma, offset=start).reshape(h, w))
        pos = start + frame_bytes
    return np.stack(frames) if frames else np.empty((0, h, w), np.uint8), fps


def write_y4m(path, frames, fps: float) -> Path:
    """Write (m, h, w) uint8 luma frames as a monochrome Y4M stream."""
    frames = np.asarray(frames)
    if frames.dtype != np.uint8 or frames.ndim != 3:
        raise MediaError("write_y4m expects (m, h, w) uint8 frames")
    num, den = _rate_fraction(fps)
    _, h, w = frames.shape
    parts = [f"YUV4MPEG2 W{w} H{h} F{num}:{den} Ip A1:1 Cmono\n".encode("ascii")]
    for f in frames:
        parts.append(b"FRAME\n")
        parts.append(np.ascontiguousarray(f).tobytes())
    Path(path).write_bytes(b"".join(parts))
    return Path(path)


def _rate_fraction(fps: float) -> tuple[int, int]:
    from fractions import Fraction

    fr = Fraction(fps).limit_denominator(1001)
    return fr.numerator, fr.denominator


_YUV_DIMS = re.compile(r"(\d+)x(\d+)")


def read_yuv(path) -> np.ndarray:
    """Raw planar 8-bit 4:2:0 video; dimensions come from a ``WxH`` token in the file name."""
    path = Path(path)
    match = None
    for match in _YUV_DIMS.finditer(path.stem):
        pass
    if match is None:
        raise MediaError(f"{path}: raw YUV file name must carry its size, e.g. clip_64x48.yuv")
    w, h = int(match.group(1)), int(match.group(2))
    luma = w * h
    frame_bytes = luma + _chroma_bytes(w, h, "420")
    raw = path.read_bytes()
    if len(raw) % frame_bytes:
        raise MediaError(f"{path}: size {len(raw)} is not a multiple of the {w}x{h} 4:2:0 frame size")
    m = len(raw) // frame_bytes
    return np.stack([np.frombuffer(raw, np.uint8, luma, k * frame_bytes).reshape(h, w) for k in range(m)]) if m else np.empty((0, h, w), np.uint8)


# --------------------------------------------------------------------------
# audio


def read_wav(path) -> tuple[np.ndarray, int]:
    """PCM WAV as float64 mono in [-1, 1]; stereo channels are averaged."""
    try:
        sr, data = wavfile.read(str(path))
    except (ValueError, OSError) as e:
        raise MediaError(f"{path}: cannot read WAV ({e})") from None
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return x, int(sr)


def write_wav(path, audio, sample_rate: int) -> Path:
    """Write mono float audio as 16-bit PCM (values clipped to [-1, 1])."""
    x = np.clip(np.asarray(audio, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    wavfile.write(str(path), int(sample_rate), pcm)
    return Path(path)


# --------------------------------------------------------------------------


def load_media(record: SequenceRecord) -> RawMedia:
    """Decode a record's video and audio and align the audio to the m video frames."""
    return load_pair(record.video_path, record.audio_path, record.fps, name=record.id)


def load_pair(video_path, audio_path, fps: float | None = None, name: str = "") -> RawMedia:
    """Decode a video/audio file pair; ``fps`` defaults to the Y4M header rate.

    Audio shorter than the video by less than one frame period is zero-padded;
    anything shorter fails.
    """
    name = name or Path(video_path).stem
    vpath, apath = Path(video_path), Path(audio_path)
    for p in (vpath, apath):
        if not p.is_file():
            raise MediaError(f"{name}: media file not found: {p}")
    header_fps = None
    if vpath.suffix.lower() == ".y4m":
        frames, header_fps = read_y4m(vpath)
        if fps is not None and header_fps is not None and abs(header_fps - fps) > 1e-3:
            warnings.warn(f"{name}: Y4M rate {header_fps} differs from manifest fps {fps}", stacklevel=3)
    elif vpath.suffix.lower() == ".yuv":
        frames = read_yuv(vpath)
    else:
        raise MediaError(f"{name}: unsupported video container {vpath.suffix!r}")
    if fps is None:
        fps = header_fps
    if fps is None or not fps > 0:
        raise MediaError(f"{name}: frame rate unknown; pass it explicitly")
    m = len(frames)
    if m < 2:
        raise MediaError(f"{name}: need at least 2 video frames, got {m}")

    audio, sr = read_wav(apath)
    needed = int(round(m * sr / fps))
    period = sr / fps
    if audio.size < needed - period:
        raise MediaError(
            f"{name}: audio lasts {audio.size / sr:.3f} s, video {m / fps:.3f} s (more than one frame short)"
        )
    if audio.size < needed:
        audio = np.concatenate([audio, np.zeros(needed - audio.size)])
    return RawMedia(frames, audio, sr, float(fps))
