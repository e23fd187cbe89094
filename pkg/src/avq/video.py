"""Per-frame visual descriptors: 88 NSS statistics plus spatial/temporal indices.

NSS layout (88 values, fixed order):

* for each of 4 dyadic scales (full, 1/2, 1/4, 1/8; 2x2 mean pooling):
  GGD (alpha, var) of the MSCN plane, then AGGD (alpha, eta, var_left,
  var_right) of the horizontal, vertical, main- and anti-diagonal paired
  products -> 18 values per scale, 72 in total;
* for the first 2 scales: GGD (alpha, var) of the horizontal, vertical,
  main- and anti-diagonal differences of ``log(|MSCN| + 0.1)`` -> 16 values.

Rows 89 and 90 of the per-frame column are SI and TI.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.special import gammaln

from .errors import DegenerateInputError, DimensionError, ValidationError
from .features import VideoFeatureMatrix

GAUSS_SIZE = 7
GAUSS_SIGMA = 7.0 / 6.0
MSCN_C = 1.0
LOGDERIV_C = 0.1
N_SCALES = 4
N_LOGDERIV_SCALES = 2
MIN_FRAME = 32
ALPHA_GRID = (0.2, 10.0, 0.001)

PAIR_NAMES = ("h", "v", "d1", "d2")
LOGDERIV_NAMES = ("h", "v", "d1", "d2")


def _scale_names(k: int) -> list[str]:
    names = [f"s{k}_mscn_alpha", f"s{k}_mscn_var"]
    for p in PAIR_NAMES:
        names += [f"s{k}_pair_{p}_alpha", f"s{k}_pair_{p}_eta", f"s{k}_pair_{p}_var_left", f"s{k}_pair_{p}_var_right"]
    return names


NSS_FEATURE_NAMES = tuple(
    [n for k in range(N_SCALES) for n in _scale_names(k)]
    + [f"s{k}_logderiv_{p}_{s}" for k in range(N_LOGDERIV_SCALES) for p in LOGDERIV_NAMES for s in ("alpha", "var")]
)
VIDEO_FEATURE_NAMES = NSS_FEATURE_NAMES + ("SI", "TI")
assert len(NSS_FEATURE_NAMES) == 88


@lru_cache(maxsize=None)
def gaussian_window(size: int = GAUSS_SIZE, sigma: float = GAUSS_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian kernel (sums to 1)."""
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


@lru_cache(maxsize=None)
def _ratio_table():
    lo, hi, step = ALPHA_GRID
    alphas = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    r = np.exp(2.0 * gammaln(2.0 / alphas) - gammaln(1.0 / alphas) - gammaln(3.0 / alphas))
    return alphas, r


def ggd_ratio(alpha):
    """r(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)) = (E|x|)^2 / E[x^2] for a GGD."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return np.exp(2.0 * gammaln(2.0 / alpha) - gammaln(1.0 / alpha) - gammaln(3.0 / alpha))


def _alpha_from_ratio(rho: float) -> float:
    alphas, r = _ratio_table()
    return float(alphas[np.argmin(np.abs(r - rho))])


def _mscn(plane: np.ndarray) -> np.ndarray:
    img = np.asarray(plane, dtype=np.float64)
    # MSCN ignores constant offsets; centering keeps the variance estimate well-conditioned
    img = img - img.mean()
    w = gaussian_window()
    mu = ndimage.correlate(img, w, mode="reflect")
    sigma = np.sqrt(np.abs(ndimage.correlate(img * img, w, mode="reflect") - mu * mu))
    return (img - mu) / (sigma + MSCN_C)


def mscn(frame) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients of a luma plane.

    ``(I - mu) / (sigma + 1)`` with mu, sigma the 7x7 Gaussian-weighted
    (sigma = 7/6) local mean and deviation; borders are mirrored.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise DimensionError(f"expected a 2-D luma plane, got shape {frame.shape}")
    if min(frame.shape) < GAUSS_SIZE:
        raise ValidationError(f"frame {frame.shape} smaller than the {GAUSS_SIZE}x{GAUSS_SIZE} kernel support")
    return _mscn(frame)


def fit_ggd(samples, min_samples: int = 100) -> tuple[float, float]:
    """Moment-matching GGD fit. Returns ``(alpha, variance)``.

    alpha is the grid point on [0.2, 10] (step 0.001) whose ratio
    ``r(alpha)`` is closest to ``(E|x|)^2 / E[x^2]``.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_samples:
        raise DegenerateInputError(f"GGD fit needs >= {min_samples} samples, got {x.size}")
    var = float(np.var(x))
    second = float(np.mean(x * x))
    if var <= 0.0 or second <= 0.0:
        raise DegenerateInputError("GGD fit on zero-variance samples")
    rho = float(np.mean(np.abs(x))) ** 2 / second
    return _alpha_from_ratio(rho), var


def fit_aggd(samples, min_samples: int = 100) -> tuple[float, float, float, float]:
    """Asymmetric GGD moment matching. Returns ``(alpha, eta, var_left, var_right)``.

    ``min_samples`` applies to each side (strictly negative / strictly
    positive values). With ``min_samples=0`` an empty side gets variance 0.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    left = x[x < 0]
    right = x[x > 0]
    if left.size < min_samples or right.size < min_samples:
        raise DegenerateInputError(
            f"AGGD fit needs >= {min_samples} samples per side, got {left.size} negative / {right.size} positive"
        )
    var_l = float(np.mean(left * left)) if left.size else 0.0
    var_r = float(np.mean(right * right)) if right.size else 0.0
    second = float(np.mean(x * x))
    if second <= 0.0:
        raise DegenerateInputError("AGGD fit on all-zero samples")
    r_hat = float(np.mean(np.abs(x))) ** 2 / second
    sl, sr = np.sqrt(var_l), np.sqrt(var_r)
    if sr > 0.0:
        g = sl / sr
        r_norm = r_hat * (g**3 + 1.0) * (g + 1.0) / (g**2 + 1.0) ** 2
    else:
        # limit of the normalization as sl/sr -> infinity
        r_norm = r_hat
    alpha = _alpha_from_ratio(r_norm)
    lg1, lg2, lg3 = gammaln(1.0 / alpha), gammaln(2.0 / alpha), gammaln(3.0 / alpha)
    spread = np.exp(0.5 * (lg1 - lg3))
    eta = (sr - sl) * spread * np.exp(lg2 - lg1)
    return alpha, float(eta), var_l, var_r


def paired_products(m: np.ndarray) -> tuple[np.ndarray, ...]:
    """Horizontal, vertical, main-diagonal and anti-diagonal neighbour products."""
    return (
        m[:, :-1] * m[:, 1:],
        m[:-1, :] * m[1:, :],
        m[:-1, :-1] * m[1:, 1:],
        m[1:, :-1] * m[:-1, 1:],
    )


def log_derivatives(m: np.ndarray) -> tuple[np.ndarray, ...]:
    L = np.log(np.abs(m) + LOGDERIV_C)
    return (
        L[:, 1:] - L[:, :-1],
        L[1:, :] - L[:-1, :],
        L[1:, 1:] - L[:-1, :-1],
        L[1:, :-1] - L[:-1, 1:],
    )


def downscale(plane: np.ndarray) -> np.ndarray:
    """2x2 mean pooling; a trailing odd row/column is dropped."""
    h, w = plane.shape[0] // 2, plane.shape[1] // 2
    p = np.asarray(plane, dtype=np.float64)[: 2 * h, : 2 * w]
    return p.reshape(h, 2, w, 2).mean(axis=(1, 3))


# small coarse scales hold few samples; the fitters still see >= 4 values
_SMALL = 4


def scale_features(plane: np.ndarray) -> np.ndarray:
    """The 18 MSCN/paired-product statistics of one scale."""
    m = _mscn(plane)
    out = list(fit_ggd(m, min_samples=_SMALL))
    for prod in paired_products(m):
        if prod.size < _SMALL:
            raise DegenerateInputError(f"plane {plane.shape} too small for paired products")
        out.extend(fit_aggd(prod, min_samples=0))
    return np.asarray(out)


def logderiv_features(plane: np.ndarray) -> np.ndarray:
    m = _mscn(plane)
    out = []
    for d in log_derivatives(m):
        out.extend(fit_ggd(d, min_samples=_SMALL))
    return np.asarray(out)


def pyramid(frame, n_scales: int = N_SCALES) -> list[np.ndarray]:
    planes = [np.asarray(frame, dtype=np.float64)]
    for _ in range(n_scales - 1):
        planes.append(downscale(planes[-1]))
    return planes


def nss_features(frame) -> np.ndarray:
    """88-dimensional NSS descriptor of one luma frame (layout in the module docstring)."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise DimensionError(f"expected a 2-D luma plane, got shape {frame.shape}")
    if min(frame.shape) < MIN_FRAME:
        raise ValidationError(f"frame {frame.shape} smaller than {MIN_FRAME}x{MIN_FRAME}")
    planes = pyramid(frame)
    parts = [scale_features(p) for p in planes]
    parts += [logderiv_features(p) for p in planes[:N_LOGDERIV_SCALES]]
    return np.concatenate(parts)


_SOBEL = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_magnitude(frame) -> np.ndarray:
    """Sobel gradient magnitude on the valid interior (shape reduced by 2)."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2 or min(f.shape) < 3:
        raise ValidationError(f"Sobel needs a 2-D frame of at least 3x3, got {f.shape}")
    gx = np.zeros((f.shape[0] - 2, f.shape[1] - 2))
    gy = np.zeros_like(gx)
    for i in range(3):
        for j in range(3):
            patch = f[i : i + gx.shape[0], j : j + gx.shape[1]]
            gx += _SOBEL[i, j] * patch
            gy += _SOBEL[j, i] * patch
    return np.hypot(gx, gy)


def spatial_index(frame) -> float:
    """Per-frame SI: population std of the Sobel magnitude over interior pixels."""
    return float(np.std(sobel_magnitude(frame)))


def temporal_index(frame, prev_frame=None) -> float:
    """Per-frame TI: population std of ``frame - prev_frame``; 0 without a predecessor."""
    if prev_frame is None:
        return 0.0
    a = np.asarray(frame, dtype=np.float64)
    b = np.asarray(prev_frame, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return float(np.std(a - b))


def frame_column(frame, prev_frame=None) -> np.ndarray:
    return np.concatenate([nss_features(frame), [spatial_index(frame), temporal_index(frame, prev_frame)]])


def extract_video_features(media, source_id: str = "") -> VideoFeatureMatrix:
    """90-by-m matrix: column j holds the NSS features, SI and TI of frame j."""
    frames = media.frames if hasattr(media, "frames") else media
    m = len(frames)
    if m < 2:
        raise ValidationError(f"need at least 2 frames, got {m}")
    data = np.empty((len(VIDEO_FEATURE_NAMES), m))
    prev = None
    for j, frame in enumerate(frames):
        col = frame_column(frame, prev)
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise ValidationError(
                f"non-finite video feature {VIDEO_FEATURE_NAMES[bad[0]]!r} at frame {j}"
                + (f" of {source_id}" if source_id else "")
            )
        data[:, j] = col
        prev = frame
    return VideoFeatureMatrix(data, list(VIDEO_FEATURE_NAMES), source_id)
