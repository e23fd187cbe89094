"""
What the per-frame features look like
=====================================

Each video frame becomes a 90-vector (88 natural-scene statistics + spatial
and temporal information) and the matching audio slice a 25-vector of
gammatone band levels in dB. This script computes them on one frame and
shows how the statistics react to blur and to noise.
"""
import numpy as np
from scipy import ndimage

from avq.audio import gammatone_bank
from avq.video import (
    NSS_FEATURE_NAMES,
    fit_ggd,
    mscn,
    nss_features,
    spatial_index,
    temporal_index,
)

rng = np.random.default_rng(0)

# A textured test frame: smoothed noise stretched to the 8-bit range.
frame = ndimage.gaussian_filter(rng.normal(size=(64, 64)), 1.5)
frame = 255 * (frame - frame.min()) / np.ptp(frame)

# MSCN coefficients are roughly zero-mean and unit-scale for natural content.
m = mscn(frame)
print(f"MSCN mean {m.mean():+.3f}, std {m.std():.3f}")

# The GGD shape parameter tracks how peaky the MSCN histogram is:
# blur makes it peakier (smaller alpha), white noise pushes it toward Gaussian.
blurred = ndimage.gaussian_filter(frame, 2.0)
noisy = np.clip(frame + rng.normal(0, 25, frame.shape), 0, 255)
for label, f in (("original", frame), ("blurred", blurred), ("noisy", noisy)):
    alpha, var = fit_ggd(mscn(f).ravel())
    print(f"  {label:9s} alpha={alpha:.3f} var={var:.3f}  SI={spatial_index(f):6.2f}")

# The full 88-vector, in its documented order.
v = nss_features(frame)
print(f"nss_features -> {v.shape[0]} values; first three:")
for name, val in zip(NSS_FEATURE_NAMES[:3], v[:3]):
    print(f"  {name:22s} {val:.4f}")

# Temporal information is the std of the frame difference (0 for the first frame).
shifted = np.roll(frame, 2, axis=1)
print(f"TI(first frame) = {temporal_index(frame)}, TI(shifted) = {temporal_index(shifted, frame):.2f}")

# The audio side: 25 ERB-spaced gammatone bands.
bank = gammatone_bank(16000)
print("gammatone centres (Hz):", np.round(bank.centers[[0, 6, 12, 18, 24]]).astype(int), "...")
