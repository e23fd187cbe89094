"""Gammatone intensity spectrogram aligned one column per video frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import MediaError, ValidationError
from .features import N_AUDIO, AudioFeatureMatrix

LOW_HZ = 50.0
HIGH_HZ = 16000.0
NYQUIST_FRACTION = 0.45
DB_FLOOR = -80.0
GT_ORDER = 4
MIN_SAMPLE_RATE = 8000


def hz_to_erb_rate(f):
    """Glasberg & Moore ERB-number scale."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def erb_bandwidth(fc):
    return 24.7 * (4.37 * np.asarray(fc, dtype=np.float64) / 1000.0 + 1.0)


@dataclass(frozen=True)
class GammatoneBank:
    sample_rate: float
    centers: np.ndarray
    order: int = GT_ORDER

    @property
    def bandwidths(self) -> np.ndarray:
        return 1.019 * erb_bandwidth(self.centers)

    def magnitude(self, freqs) -> np.ndarray:
        """|H_b(f)| of each band (rows) at ``freqs`` (columns)."""
        f = np.asarray(freqs, dtype=np.float64)
        x = (f[None, :] - self.centers[:, None]) / self.bandwidths[:, None]
        return (1.0 + x * x) ** (-self.order / 2.0)

    def power_weights(self, n_fft: int) -> np.ndarray:
        freqs = np.fft.rfftfreq(n_fft, d=1.0 / self.sample_rate)
        return self.magnitude(freqs) ** 2


def gammatone_bank(sample_rate: float, n_bands: int = N_AUDIO) -> GammatoneBank:
    """25 fourth-order gammatone bands ERB-spaced from 50 Hz to min(16 kHz, 0.45 fs)."""
    if sample_rate < MIN_SAMPLE_RATE:
        raise ValidationError(f"sample rate {sample_rate} Hz below {MIN_SAMPLE_RATE} Hz")
    hi = min(HIGH_HZ, NYQUIST_FRACTION * sample_rate)
    centers = erb_rate_to_hz(np.linspace(hz_to_erb_rate(LOW_HZ), hz_to_erb_rate(hi), n_bands))
    centers[0], centers[-1] = LOW_HZ, hi
    return GammatoneBank(float(sample_rate), centers)


def frame_bounds(j: int, sample_rate: float, fps: float) -> tuple[int, int]:
    """Sample range [start, stop) covering video frame ``j`` (0-based)."""
    return int(round(j * sample_rate / fps)), int(round((j + 1) * sample_rate / fps))


def band_levels(segment, bank: GammatoneBank) -> np.ndarray:
    """Hann-windowed per-band power of one segment, in dB with a -80 dB floor."""
    seg = np.asarray(segment, dtype=np.float64)
    n = seg.size
    w = get_window("hann", n, fftbins=True)
    spec = np.fft.rfft(w * seg)
    power = spec.real**2 + spec.imag**2
    bp = bank.power_weights(n) @ power / w.sum() ** 2
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(bp)
    return np.maximum(db, DB_FLOOR)


def extract_audio_features(media, m: int | None = None, fps: float | None = None, source_id: str = "") -> AudioFeatureMatrix:
    """25-by-m gammatone spectrogram; column j covers audio window [j/fps, (j+1)/fps)."""
    audio = np.asarray(media.audio, dtype=np.float64)
    sr = float(media.sample_rate)
    m = len(media.frames) if m is None else int(m)
    fps = float(media.fps) if fps is None else float(fps)
    if m < 1 or fps <= 0:
        raise ValidationError(f"invalid frame count {m} or fps {fps}")
    bank = gammatone_bank(sr)
    data = np.empty((N_AUDIO, m))
    for j in range(m):
        start, stop = frame_bounds(j, sr, fps)
        if stop > audio.size:
            raise MediaError(
                f"audio window {j} [{start}, {stop}) exceeds {audio.size} samples" + (f" in {source_id}" if source_id else "")
            )
        data[:, j] = band_levels(audio[start:stop], bank)
    names = [f"gt_{c:.1f}hz" for c in bank.centers]
    return AudioFeatureMatrix(data, names, source_id, bank.centers.copy())
