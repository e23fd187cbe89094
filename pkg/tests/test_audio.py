import numpy as np
import pytest

from avq.audio import (
    DB_FLOOR,
    band_levels,
    erb_rate_to_hz,
    extract_audio_features,
    frame_bounds,
    gammatone_bank,
    hz_to_erb_rate,
)
from avq.errors import MediaError, ValidationError
from avq.features import N_AUDIO
from avq.media import RawMedia


def media(audio, sr=16000, fps=10.0, m=None):
    m = m if m is not None else int(round(len(audio) / sr * fps))
    return RawMedia(np.zeros((m, 32, 32), np.uint8), np.asarray(audio, dtype=np.float64), sr, fps)


class TestBank:
    def test_48k_endpoints(self):
        bank = gammatone_bank(48000)
        assert bank.centers.shape == (25,)
        assert bank.centers[0] == 50.0
        assert bank.centers[-1] == 16000.0

    def test_16k_top_band(self):
        assert gammatone_bank(16000).centers[-1] == pytest.approx(7200.0)

    @pytest.mark.parametrize("sr", [8000, 16000, 22050, 44100, 48000])
    def test_erb_spacing(self, sr):
        c = gammatone_bank(sr).centers
        assert np.all(np.diff(c) > 0)
        steps = np.diff(hz_to_erb_rate(c))
        np.testing.assert_allclose(steps, steps[0], rtol=1e-9)
        assert np.all(np.diff(np.diff(c)) > 0)  # spacing in Hz grows with frequency

    def test_erb_scale_inverse(self):
        f = np.array([50.0, 440.0, 7200.0])
        np.testing.assert_allclose(erb_rate_to_hz(hz_to_erb_rate(f)), f, rtol=1e-12)

    def test_low_rate_rejected(self):
        with pytest.raises(ValidationError):
            gammatone_bank(4000)

    def test_unit_gain_at_center(self):
        bank = gammatone_bank(16000)
        mag = bank.magnitude(bank.centers)
        np.testing.assert_allclose(np.diag(mag), 1.0)
        assert np.all(mag <= 1.0)


class TestLevels:
    def test_silence_floor(self):
        fm = extract_audio_features(media(np.zeros(16000)))
        np.testing.assert_array_equal(fm.data, DB_FLOOR)

    @pytest.mark.parametrize("k", range(N_AUDIO))
    def test_tone_peaks_in_its_band(self, k):
        sr = 16000
        fc = gammatone_bank(sr).centers[k]
        t = np.arange(sr) / sr
        fm = extract_audio_features(media(0.5 * np.sin(2 * np.pi * fc * t), sr))
        assert np.all(np.argmax(fm.data, axis=0) == k)

    def test_shape_300_frames(self):
        sr = 8000
        fm = extract_audio_features(media(np.random.default_rng(0).standard_normal(10 * sr), sr, fps=30.0))
        assert fm.shape == (25, 300)
        assert fm.band_centers_hz.shape == (25,)

    def test_gain_shift(self):
        x = 0.1 * np.random.default_rng(1).standard_normal(16000)
        a = extract_audio_features(media(x)).data
        b = extract_audio_features(media(3.0 * x)).data
        live = (a > DB_FLOOR) & (b > DB_FLOOR)
        assert live.any()
        np.testing.assert_allclose(b[live] - a[live], 20 * np.log10(3.0), atol=1e-9)

    def test_locality(self):
        sr, fps = 16000, 10.0
        x = np.random.default_rng(2).standard_normal(sr)
        base = extract_audio_features(media(x, sr, fps)).data
        j = 4
        start, stop = frame_bounds(j, sr, fps)
        y = x.copy()
        y[:start] += 5.0
        y[stop:] *= -2.0
        np.testing.assert_array_equal(extract_audio_features(media(y, sr, fps)).data[:, j], base[:, j])

    def test_entries_finite_and_floored(self):
        fm = extract_audio_features(media(np.random.default_rng(3).standard_normal(16000)))
        assert np.all(np.isfinite(fm.data))
        assert fm.data.min() >= DB_FLOOR

    def test_band_levels_hann_normalization(self):
        # a full-scale DC-free tone exactly at a band centre: power ~ A^2/4 after (sum w)^2 normalization
        bank = gammatone_bank(16000)
        fc = 1000.0
        n = 1600
        seg = np.cos(2 * np.pi * fc * np.arange(n) / 16000)
        lv = band_levels(seg, bank)
        assert lv.max() == pytest.approx(10 * np.log10(0.25), abs=1.5)


class TestWindows:
    def test_bounds_tile_the_signal(self):
        sr, fps = 44100, 29.97
        stops = [frame_bounds(j, sr, fps) for j in range(50)]
        for (a, b), (c, _) in zip(stops, stops[1:]):
            assert b == c and b > a

    def test_short_audio(self):
        with pytest.raises(MediaError):
            extract_audio_features(media(np.zeros(1000), m=10))
