"""
A synthetic distorted audio-visual dataset
==========================================

The quality model needs (video, audio, MOS) triples. With no subjective
database at hand, ``avq.synth`` generates one: smooth moving textures plus a
harmonic tone, each sequence degraded by one video distortion (bitrate,
packet loss, frame freezing) and one audio distortion (noise, chop, clip,
echo). The synthetic MOS falls with both severities, video weighted more.

Run:  python demos/01_synthetic_dataset.py [OUT_DIR]
"""
import sys
import collections

import numpy as np

from avq.media import load_media
from avq.synth import SynthSpec, combined_severity, synth_dataset

out = sys.argv[1] if len(sys.argv) > 1 else "demo_data"

# A small spec keeps this quick; the benchmark uses 120 x 64x64 x 3 s.
spec = SynthSpec(n_sequences=24, seed=1, frame_size=(64, 64), fps=10.0, duration=2.0, sample_rate=16000)
manifest, records = synth_dataset(spec, out)
print(f"manifest: {manifest}  ({len(records)} sequences)")

# The manifest carries everything the evaluation needs: paths, fps, MOS and
# the distortion labels that define the per-group breakdown.
for r in records[:5]:
    print(f"  {r.id}  MOS {r.mos:4.2f}  audio={r.audio_distortion:<5s} ({r.audio_severity:.2f})"
          f"  video={r.video_distortion:<14s} ({r.video_severity:.2f})")

counts = collections.Counter((r.audio_distortion, r.video_distortion) for r in records)
print("distortion pairs:", dict(counts))

# Severity drives the score: the worse of the (weighted) audio and video
# severities sets the level, plus a little jitter.
sev = np.array([combined_severity(r.audio_severity, r.video_severity) for r in records])
mos = np.array([r.mos for r in records])
print(f"corr(combined severity, MOS) = {np.corrcoef(sev, mos)[0, 1]:+.3f}")

# Media load back as luma frames plus mono float audio of matching length.
media = load_media(records[0])
print(f"{records[0].id}: frames {media.frames.shape}, audio {media.audio.shape} @ {media.sample_rate} Hz")
