import warnings

import numpy as np
import pytest

from avq.errors import MediaError, ValidationError
from avq.media import (
    MANIFEST_FIELDS,
    SequenceRecord,
    load_manifest,
    load_media,
    load_pair,
    read_wav,
    read_y4m,
    read_yuv,
    write_manifest,
    write_wav,
    write_y4m,
)

HEADER = ",".join(MANIFEST_FIELDS) + "\n"


def make_pair(tmp_path, m=5, fps=10.0, sr=8000, audio_seconds=None, name="clip"):
    frames = np.random.default_rng(0).integers(0, 256, (m, 24, 32), dtype=np.uint8)
    vpath = write_y4m(tmp_path / f"{name}.y4m", frames, fps)
    n = int(round((audio_seconds if audio_seconds is not None else m / fps) * sr))
    apath = write_wav(tmp_path / f"{name}.wav", 0.3 * np.sin(np.arange(n) * 0.1), sr)
    return frames, vpath, apath


class TestManifest:
    def test_rows_in_order(self, tmp_path):
        rows = "".join(f"s{i},v{i}.y4m,a{i}.wav,25,{1 + i % 4},noise,bitrate\n" for i in range(800))
        (tmp_path / "m.csv").write_text(HEADER + rows)
        recs = load_manifest(tmp_path / "m.csv")
        assert len(recs) == 800
        assert [r.id for r in recs[:3]] == ["s0", "s1", "s2"]
        assert recs[0].video_path == str(tmp_path / "v0.y4m")

    def test_header_only(self, tmp_path):
        (tmp_path / "m.csv").write_text(HEADER)
        assert load_manifest(tmp_path / "m.csv") == []

    def test_mos_out_of_range_names_line(self, tmp_path):
        (tmp_path / "m.csv").write_text(HEADER + "a,v.y4m,a.wav,25,3,none,none\nb,v.y4m,a.wav,25,5.7,none,none\n")
        with pytest.raises(ValidationError, match="line 3.*mos"):
            load_manifest(tmp_path / "m.csv")

    def test_bad_number_names_field(self, tmp_path):
        (tmp_path / "m.csv").write_text(HEADER + "a,v.y4m,a.wav,fast,3,none,none\n")
        with pytest.raises(ValidationError, match="line 2.*'fps'"):
            load_manifest(tmp_path / "m.csv")

    def test_unknown_distortion(self, tmp_path):
        (tmp_path / "m.csv").write_text(HEADER + "a,v.y4m,a.wav,25,3,hiss,none\n")
        with pytest.raises(ValidationError, match="line 2"):
            load_manifest(tmp_path / "m.csv")

    def test_wrong_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("id,video,audio\n")
        with pytest.raises(ValidationError):
            load_manifest(tmp_path / "m.csv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(MediaError):
            load_manifest(tmp_path / "nope.csv")

    def test_round_trip_with_severity(self, tmp_path):
        recs = [
            SequenceRecord("a", str(tmp_path / "a.y4m"), str(tmp_path / "a.wav"), 29.97, 3.123456789, "echo", "bitrate", 0.25, 1.0),
            SequenceRecord("b", str(tmp_path / "b.y4m"), str(tmp_path / "b.wav"), 10.0, 1.0, "none", "none", 0.0, 0.0),
        ]
        write_manifest(recs, tmp_path / "m.csv", relative_to=tmp_path)
        assert load_manifest(tmp_path / "m.csv") == recs

    def test_record_validation(self):
        with pytest.raises(ValidationError):
            SequenceRecord("x", "v", "a", 0.0, 3.0)
        with pytest.raises(ValidationError):
            SequenceRecord("x", "v", "a", 25.0, 3.0, video_severity=1.5)


class TestVideoIO:
    def test_y4m_round_trip(self, tmp_path):
        frames = np.random.default_rng(1).integers(0, 256, (4, 18, 22), dtype=np.uint8)
        write_y4m(tmp_path / "x.y4m", frames, 29.97)
        back, fps = read_y4m(tmp_path / "x.y4m")
        np.testing.assert_array_equal(back, frames)
        assert fps == pytest.approx(29.97, abs=1e-3)

    def test_y4m_420_luma(self, tmp_path):
        w, h = 8, 6
        luma = np.arange(w * h, dtype=np.uint8).reshape(h, w)
        chroma = np.full(2 * (w // 2) * (h // 2), 128, np.uint8)
        body = b"".join(b"FRAME\n" + luma.tobytes() + chroma.tobytes() for _ in range(3))
        (tmp_path / "c.y4m").write_bytes(b"YUV4MPEG2 W8 H6 F25:1 C420jpeg\n" + body)
        frames, fps = read_y4m(tmp_path / "c.y4m")
        assert frames.shape == (3, 6, 8)
        np.testing.assert_array_equal(frames[2], luma)
        assert fps == 25.0

    def test_raw_yuv(self, tmp_path):
        w, h = 8, 4
        luma = np.random.default_rng(2).integers(0, 256, (2, h, w), dtype=np.uint8)
        chroma = np.zeros(2 * (w // 2) * (h // 2), np.uint8).tobytes()
        (tmp_path / "clip_8x4.yuv").write_bytes(b"".join(f.tobytes() + chroma for f in luma))
        np.testing.assert_array_equal(read_yuv(tmp_path / "clip_8x4.yuv"), luma)

    def test_raw_yuv_needs_size(self, tmp_path):
        (tmp_path / "clip.yuv").write_bytes(b"\0" * 96)
        with pytest.raises(MediaError):
            read_yuv(tmp_path / "clip.yuv")


class TestAudioIO:
    def test_stereo_equal_channels(self, tmp_path):
        from scipy.io import wavfile

        ch = (np.random.default_rng(3).uniform(-0.5, 0.5, 400) * 32767).astype(np.int16)
        wavfile.write(str(tmp_path / "s.wav"), 8000, np.stack([ch, ch], axis=1))
        mono, sr = read_wav(tmp_path / "s.wav")
        assert sr == 8000
        np.testing.assert_array_equal(mono, ch / 32768.0)

    def test_write_read(self, tmp_path):
        x = np.linspace(-1, 1, 101)
        write_wav(tmp_path / "x.wav", x, 16000)
        y, _ = read_wav(tmp_path / "x.wav")
        np.testing.assert_allclose(y, x, atol=1 / 16000)


class TestLoadMedia:
    def test_frame_count(self, tmp_path):
        frames, v, a = make_pair(tmp_path, m=30, fps=30.0)
        rec = SequenceRecord("c", str(v), str(a), 30.0, 4.0)
        media = load_media(rec)
        assert media.m == 30
        np.testing.assert_array_equal(media.frames, frames)
        assert media.audio.size == 8000

    def test_audio_half_second_short(self, tmp_path):
        _, v, a = make_pair(tmp_path, m=20, fps=10.0, audio_seconds=1.5)
        with pytest.raises(MediaError, match="short"):
            load_media(SequenceRecord("c", str(v), str(a), 10.0, 4.0))

    def test_small_shortfall_padded(self, tmp_path):
        _, v, a = make_pair(tmp_path, m=10, fps=10.0, audio_seconds=0.95)
        media = load_media(SequenceRecord("c", str(v), str(a), 10.0, 4.0))
        assert media.audio.size == 8000
        assert np.all(media.audio[7600:] == 0)

    def test_single_frame_rejected(self, tmp_path):
        _, v, a = make_pair(tmp_path, m=1)
        with pytest.raises(MediaError, match="2 video frames"):
            load_media(SequenceRecord("c", str(v), str(a), 10.0, 4.0))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MediaError, match="not found"):
            load_media(SequenceRecord("c", str(tmp_path / "v.y4m"), str(tmp_path / "a.wav"), 10.0, 4.0))

    def test_fps_mismatch_warns(self, tmp_path):
        _, v, a = make_pair(tmp_path, m=5, fps=10.0, audio_seconds=1.0)
        with pytest.warns(UserWarning, match="differs"):
            load_media(SequenceRecord("c", str(v), str(a), 5.0, 4.0))

    def test_pair_uses_header_rate(self, tmp_path):
        _, v, a = make_pair(tmp_path, m=5, fps=10.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert load_pair(v, a).fps == 10.0
