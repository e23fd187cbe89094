"""Synthetic distorted audio-visual dataset for desk-scale experiments.

Every sequence gets one audio and one video distortion at a severity drawn
from {0, 0.25, 0.5, 0.75, 1}. The synthetic MOS is

    MOS = clip(5 - 3.5 * max(0.6 * s_audio, 1.0 * s_video) + U(-0.1, 0.1), 1, 5)

so quality falls monotonically with severity and video impairments dominate.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .errors import MediaError, ValidationError
from .media import SequenceRecord, load_manifest, write_manifest, write_wav, write_y4m

log = logging.getLogger(__name__)

SEVERITIES = (0.0, 0.25, 0.5, 0.75, 1.0)
SYNTH_AUDIO = ("noise", "chop", "clip", "echo")
SYNTH_VIDEO = ("packet_loss", "frame_freezing", "bitrate")
VIDEO_WEIGHT = 1.0
AUDIO_WEIGHT = 0.6
JITTER = 0.1


@dataclass(frozen=True)
class SynthSpec:
    n_sequences: int = 120
    seed: int = 0
    frame_size: tuple = (64, 64)  # (width, height)
    fps: float = 10.0
    duration: float = 3.0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.n_sequences < 1:
            raise ValidationError("n_sequences must be >= 1")
        w, h = self.frame_size
        if w < 32 or h < 32:
            raise ValidationError(f"frame_size {self.frame_size} below the 32x32 feature minimum")
        if self.fps <= 0 or self.duration <= 0:
            raise ValidationError("fps and duration must be > 0")
        if round(self.fps * self.duration) < 2:
            raise ValidationError("sequences need at least 2 frames")

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "frame_size" in d:
            fs = d["frame_size"]
            d["frame_size"] = (int(fs), int(fs)) if np.isscalar(fs) else tuple(int(v) for v in fs)
        return cls(**d)


def combined_severity(s_audio: float, s_video: float) -> float:
    return max(AUDIO_WEIGHT * s_audio, VIDEO_WEIGHT * s_video)


def synthetic_mos(s_audio: float, s_video: float, jitter: float = 0.0) -> float:
    return float(np.clip(5.0 - 3.5 * combined_severity(s_audio, s_video) + jitter, 1.0, 5.0))


# --------------------------------------------------------------------------
# content


def _texture(rng, shape) -> np.ndarray:
    """Multi-scale filtered noise normalized to zero mean / unit std."""
    img = np.zeros(shape)
    for sigma, weight in ((0.8, 0.5), (2.0, 1.0), (5.0, 1.5)):
        img += weight * ndimage.gaussian_filter(rng.standard_normal(shape), sigma * rng.uniform(0.85, 1.2), mode="wrap")
    return (img - img.mean()) / img.std()


def base_video(rng, n_frames: int, width: int, height: int) -> np.ndarray:
    """Panning texture with a drifting grating and a moving disc; float luma in [0, 255]."""
    # periodic texture, so wrap-around shifts never show a seam
    tex = _texture(rng, (height + 16, width + 16))
    contrast = rng.uniform(35.0, 45.0)
    brightness = rng.uniform(110.0, 140.0)
    vx, vy = rng.uniform(1.5, 2.5) * rng.choice([-1, 1]), rng.uniform(0.5, 1.5) * rng.choice([-1, 1])
    kx, ky = rng.uniform(0.1, 0.4, size=2)
    grating_amp = rng.uniform(5.0, 15.0)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cx0, cy0 = rng.uniform(0.2, 0.8) * width, rng.uniform(0.2, 0.8) * height
    radius = rng.uniform(0.1, 0.2) * min(width, height)
    disc_gain = rng.uniform(-40.0, 40.0)
    frames = np.empty((n_frames, height, width))
    for t in range(n_frames):
        patch = ndimage.shift(tex, (-vy * t, -vx * t), order=1, mode="grid-wrap")[:height, :width]
        grating = grating_amp * np.sin(kx * xx + ky * yy + 0.4 * t)
        cx = cx0 + 1.5 * t * np.sign(vx)
        cy = cy0 + 1.0 * t * np.sign(vy)
        arg = ((xx - cx) ** 2 + (yy - cy) ** 2 - radius**2) / (2.0 * radius)
        disc = disc_gain / (1.0 + np.exp(np.clip(arg, -50.0, 50.0)))
        frames[t] = brightness + contrast * patch + grating + disc
    return np.clip(frames, 0.0, 255.0)


def base_audio(rng, n_samples: int, sample_rate: int) -> np.ndarray:
    """A few amplitude-modulated tones plus low-level noise, peak 0.5."""
    t = np.arange(n_samples) / sample_rate
    x = np.zeros(n_samples)
    for _ in range(rng.integers(3, 6)):
        f = np.exp(rng.uniform(np.log(120.0), np.log(min(4000.0, 0.4 * sample_rate))))
        am = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
        x += rng.uniform(0.3, 1.0) * am * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x += 0.02 * rng.standard_normal(n_samples)
    return 0.5 * x / np.abs(x).max()


# --------------------------------------------------------------------------
# video distortions (severity 0 leaves the input untouched)


def _blockwise_dct_quantize(frame: np.ndarray, step: float, block: int = 8) -> np.ndarray:
    h, w = frame.shape
    hb, wb = h // block * block, w // block * block
    out = frame.copy()
    blocks = frame[:hb, :wb].reshape(hb // block, block, wb // block, block).transpose(0, 2, 1, 3)
    coef = dctn(blocks - 128.0, axes=(2, 3), norm="ortho")
    # coarser steps for higher frequencies, as in perceptual quantization tables
    fy, fx = np.mgrid[0:block, 0:block]
    q = step * (1.0 + 0.5 * (fy + fx))
    rec = idctn(np.round(coef / q) * q, axes=(2, 3), norm="ortho") + 128.0
    out[:hb, :wb] = rec.transpose(0, 2, 1, 3).reshape(hb, wb)
    return out


def distort_bitrate(frames, s, rng):
    if s <= 0:
        return frames
    step = 4.0 + 36.0 * s
    blurred = ndimage.gaussian_filter(frames, (0, 0.6 * s, 0.6 * s))
    return np.stack([_blockwise_dct_quantize(f, step) for f in blurred])


def distort_packet_loss(frames, s, rng, block: int = 8):
    """Lost macroblocks concealed with displaced, noisy blocks of the previous output frame.

    Every frame loses a share of blocks proportional to ``s``; the first frame
    conceals from a shifted copy of itself.
    """
    if s <= 0:
        return frames
    out = frames.copy()
    m, h, w = frames.shape
    by, bx = h // block, w // block
    n_lost = max(1, int(round(s * 0.5 * by * bx)))
    for t in range(m):
        ref = out[t - 1] if t > 0 else np.roll(frames[0], (3, 3), axis=(0, 1))
        for idx in rng.choice(by * bx, size=n_lost, replace=False):
            r, c = divmod(int(idx), bx)
            dy, dx = rng.integers(-6, 7, size=2)
            sy = int(np.clip(r * block + dy, 0, h - block))
            sx = int(np.clip(c * block + dx, 0, w - block))
            patch = ref[sy : sy + block, sx : sx + block]
            out[t, r * block : (r + 1) * block, c * block : (c + 1) * block] = patch + rng.normal(0.0, 25.0 * s, (block, block))
    return out


def distort_frame_freezing(frames, s, rng):
    """Freeze runs covering about 80% * s of the frames (first frame always shown)."""
    if s <= 0:
        return frames
    m = len(frames)
    target = int(round(0.8 * s * (m - 1)))
    frozen = np.zeros(m, dtype=bool)
    while frozen.sum() < target:
        start = rng.integers(1, m)
        length = rng.integers(2, max(3, m // 4))
        frozen[start : start + length] = True
        if frozen.sum() > target:
            extra = np.flatnonzero(frozen)[target:]
            frozen[extra] = False
    out = frames.copy()
    for t in range(1, m):
        if frozen[t]:
            out[t] = out[t - 1]
    return out


VIDEO_FNS = {
    "bitrate": distort_bitrate,
    "packet_loss": distort_packet_loss,
    "frame_freezing": distort_frame_freezing,
}


# --------------------------------------------------------------------------
# audio distortions


def distort_noise(x, s, rng, sample_rate):
    if s <= 0:
        return x
    rms = np.sqrt(np.mean(x * x))
    return x + 1.5 * s * rms * rng.standard_normal(x.size)


def distort_chop(x, s, rng, sample_rate):
    if s <= 0:
        return x
    seg = max(1, int(0.04 * sample_rate))
    out = x.copy()
    for start in range(0, x.size, seg):
        if rng.random() < 0.6 * s:
            out[start : start + seg] = 0.0
    return out


def distort_clip(x, s, rng, sample_rate):
    if s <= 0:
        return x
    level = np.abs(x).max() * (1.0 - 0.92 * s)
    return np.clip(x, -level, level) * (0.5 / level)


def distort_echo(x, s, rng, sample_rate):
    if s <= 0:
        return x
    out = x.copy()
    for k, gain in ((1, 0.8 * s), (2, 0.55 * s), (3, 0.35 * s)):
        d = int(k * 0.12 * sample_rate)
        if d < x.size:
            out[d:] += gain * x[: x.size - d]
    return 0.5 * out / np.abs(out).max()


AUDIO_FNS = {"noise": distort_noise, "chop": distort_chop, "clip": distort_clip, "echo": distort_echo}


# --------------------------------------------------------------------------


def _assignments(spec: SynthSpec, rng):
    """Balanced distortion types (shuffled cycles) and independent severities."""
    n = spec.n_sequences
    a_types = np.array(SYNTH_AUDIO)[rng.permutation(np.arange(n) % len(SYNTH_AUDIO))]
    v_types = np.array(SYNTH_VIDEO)[rng.permutation(np.arange(n) % len(SYNTH_VIDEO))]
    a_sev = rng.choice(SEVERITIES, size=n)
    v_sev = rng.choice(SEVERITIES, size=n)
    jitter = rng.uniform(-JITTER, JITTER, size=n)
    return a_types, v_types, a_sev, v_sev, jitter


def synth_dataset(spec: SynthSpec, out_dir) -> tuple[Path, list[SequenceRecord]]:
    """Generate media files plus ``manifest.csv`` under ``out_dir``.

    Output bytes depend only on ``spec`` (including its seed).
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "media").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise MediaError(f"cannot create output directory {out_dir}: {e}") from None
    rng = np.random.default_rng(spec.seed)
    a_types, v_types, a_sev, v_sev, jitter = _assignments(spec, rng)
    w, h = spec.frame_size
    m = spec.n_frames
    n_samples = int(round(m * spec.sample_rate / spec.fps))
    width = len(str(spec.n_sequences - 1))
    records = []
    for i in range(spec.n_sequences):
        srng = np.random.default_rng([spec.seed, i])
        sid = f"seq{i:0{width}d}"
        video = base_video(srng, m, w, h)
        video = VIDEO_FNS[v_types[i]](video, float(v_sev[i]), srng)
        frames = np.round(np.clip(video, 0.0, 255.0)).astype(np.uint8)
        audio = base_audio(srng, n_samples, spec.sample_rate)
        audio = AUDIO_FNS[a_types[i]](audio, float(a_sev[i]), srng, spec.sample_rate)
        vpath = write_y4m(out_dir / "media" / f"{sid}.y4m", frames, spec.fps)
        apath = write_wav(out_dir / "media" / f"{sid}.wav", audio, spec.sample_rate)
        records.append(
            SequenceRecord(
                id=sid,
                video_path=str(vpath.relative_to(out_dir)),
                audio_path=str(apath.relative_to(out_dir)),
                fps=float(spec.fps),
                mos=synthetic_mos(float(a_sev[i]), float(v_sev[i]), float(jitter[i])),
                audio_distortion=str(a_types[i]),
                video_distortion=str(v_types[i]),
                audio_severity=float(a_sev[i]),
                video_severity=float(v_sev[i]),
            )
        )
    manifest = write_manifest(records, out_dir / "manifest.csv")
    log.info("wrote %d synthetic sequences to %s", len(records), out_dir)
    return manifest, load_manifest(manifest)


def spec_to_dict(spec: SynthSpec) -> dict:
    d = asdict(spec)
    d["frame_size"] = list(spec.frame_size)
    return d
