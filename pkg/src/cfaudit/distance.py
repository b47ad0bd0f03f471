"""Distance functions between an input and a candidate counterfactual.

Two families are supported:

* mixed tabular distance: a per-feature grand average of MAD-normalized
  absolute differences (continuous) and simple matching (categorical),

      d(x, c) = (n_con / n) * NormAbs(x, c) + (n_cat / n) * SimpMat(x, c)

  where NormAbs averages |x_j - c_j| / MAD'_j over continuous features and
  SimpMat is the fraction of categorical features that differ. MAD'_j is
  the training MAD with a fallback of half the observed range when the MAD
  is zero; a feature whose range is also zero contributes nothing.

* image distance: 1 / SSIM between two single-channel images, SSIM being
  the single-scale structural similarity with a uniform (box) window.

Fitness is the reciprocal of distance and is what the search maximizes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DistanceError
from .schema import FeatureSchema

if TYPE_CHECKING:
    from .dataset import DatasetStats

SSIM_EPS = 1e-6
DEFAULT_SSIM_WINDOW = 11

# SSIM stabilizers for pixels in [0, 1] (L = 1).
_C1 = (0.01 * 1.0) ** 2
_C2 = (0.03 * 1.0) ** 2


def norm_scale(mad: float, value_range: float) -> float:
    """Effective normalizer for one continuous feature.

    Zero-MAD columns fall back to half the observed range; a feature with
    zero range gets scale 0, which callers treat as "contributes 0".
    """
    if mad > 0.0:
        return mad
    return value_range / 2.0


def mixed_distance(x, c, schema: FeatureSchema, stats: "DatasetStats") -> float:
    """Mixed tabular distance between two instances of the same schema."""
    x = schema.validate_instance(x)
    c = schema.validate_instance(c)
    n = schema.n
    n_con = schema.n_con
    n_cat = schema.n_cat

    norm_abs = 0.0
    simp_mat = 0.0
    for spec, xv, cv in zip(schema.features, x, c):
        if spec.is_continuous:
            scale = norm_scale(stats.mads[spec.name], stats.ranges[spec.name])
            if scale > 0.0:
                norm_abs += abs(xv - cv) / scale
        else:
            if xv != cv:
                simp_mat += 1.0
    d = 0.0
    if n_con > 0:
        d += (n_con / n) * (norm_abs / n_con)
    if n_cat > 0:
        d += (n_cat / n) * (simp_mat / n_cat)
    return d


def mixed_distance_batch(x_enc, pop_enc, cont_mask, scales) -> np.ndarray:
    """Vectorized mixed distance from one encoded instance to many.

    `x_enc` is shape (n,), `pop_enc` shape (m, n). Continuous columns hold
    raw values, categorical columns hold integer category codes; which is
    which comes from `cont_mask`. `scales` carries the per-column effective
    normalizer (0 means the column contributes nothing). Matches
    `mixed_distance` to floating-point accumulation order.
    """
    n = x_enc.shape[0]
    n_con = int(cont_mask.sum())
    n_cat = n - n_con
    m = pop_enc.shape[0]
    d = np.zeros(m)
    if n_con > 0:
        diffs = np.abs(pop_enc[:, cont_mask] - x_enc[cont_mask])
        s = scales[cont_mask]
        safe = s > 0.0
        norm_abs = (diffs[:, safe] / s[safe]).sum(axis=1)
        d += (n_con / n) * (norm_abs / n_con)
    if n_cat > 0:
        mismatch = (pop_enc[:, ~cont_mask] != x_enc[~cont_mask]).sum(axis=1)
        d += (n_cat / n) * (mismatch / n_cat)
    return d


@dataclass(frozen=True)
class Image:
    """Single-channel image with pixels in [0, 1], row-major."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DistanceError("image dimensions must be positive")
        px = np.asarray(self.pixels, dtype=float)
        if px.size != self.width * self.height:
            raise DistanceError(
                f"expected {self.width * self.height} pixels, got {px.size}"
            )
        px = px.reshape(self.height, self.width)
        if np.any(px < 0.0) or np.any(px > 1.0) or not np.all(np.isfinite(px)):
            raise DistanceError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


def _check_window(window: int, height: int, width: int) -> None:
    if window <= 0 or window % 2 == 0:
        raise DistanceError(f"window must be an odd positive integer, got {window}")
    if window > min(height, width):
        raise DistanceError(
            f"window {window} exceeds image size {height}x{width}"
        )


def ssim_batch(ref: np.ndarray, batch: np.ndarray, window: int = DEFAULT_SSIM_WINDOW) -> np.ndarray:
    """SSIM of one reference image against a stack of images.

    `ref` has shape (H, W); `batch` shape (m, H, W). Returns shape (m,).
    Uniform box window, population moments, mean over all valid window
    positions.
    """
    ref = np.asarray(ref, dtype=float)
    batch = np.asarray(batch, dtype=float)
    h, w = ref.shape
    if batch.shape[1:] != (h, w):
        raise DistanceError(
            f"image dimensions differ: {batch.shape[1:]} vs {(h, w)}"
        )
    _check_window(window, h, w)

    ref_win = sliding_window_view(ref, (window, window))          # (H', W', k, k)
    bat_win = sliding_window_view(batch, (window, window), axis=(1, 2))  # (m, H', W', k, k)

    mu_a = ref_win.mean(axis=(-2, -1))
    mu_b = bat_win.mean(axis=(-2, -1))
    ea2 = (ref_win * ref_win).mean(axis=(-2, -1))
    eb2 = (bat_win * bat_win).mean(axis=(-2, -1))
    eab = (bat_win * ref_win).mean(axis=(-2, -1))
    var_a = ea2 - mu_a * mu_a
    var_b = eb2 - mu_b * mu_b
    cov = eab - mu_b * mu_a

    num = (2.0 * mu_a * mu_b + _C1) * (2.0 * cov + _C2)
    den = (mu_a * mu_a + mu_b * mu_b + _C1) * (var_a + var_b + _C2)
    return (num / den).mean(axis=(-2, -1))


def ssim(a: Image, b: Image, window: int = DEFAULT_SSIM_WINDOW) -> float:
    """Structural similarity between two images, in [-1, 1]."""
    if (a.width, a.height) != (b.width, b.height):
        raise DistanceError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return float(ssim_batch(a.pixels, b.pixels[np.newaxis], window)[0])


def ssim_distance(a: Image, b: Image, window: int = DEFAULT_SSIM_WINDOW) -> float:
    """Image distance 1/SSIM. Undefined (error) when SSIM <= SSIM_EPS."""
    value = ssim(a, b, window)
    if value <= SSIM_EPS:
        raise DistanceError(
            f"images maximally dissimilar (SSIM {value:.3g} <= {SSIM_EPS:g}); distance undefined"
        )
    return 1.0 / value


def fitness(d: float) -> float:
    """Fitness of a candidate at distance d: 1/d, strictly decreasing."""
    if d == 0.0:
        raise DistanceError("zero distance: candidate equals the input (engine bug)")
    if d < 0.0:
        raise DistanceError(f"negative distance {d}")
    return 1.0 / d


_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n\r]*[\n\r]\s*)*(\S+)")


def load_pgm(path) -> Image:
    """Read a PGM image (P2 ascii or P5 binary), rescaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def token():
        nonlocal pos
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise DistanceError(f"truncated PGM file {path}")
        pos = m.end()
        return m.group(1)

    magic = token()
    if magic not in (b"P2", b"P5"):
        raise DistanceError(f"{path}: not a PGM file (magic {magic!r})")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if width <= 0 or height <= 0:
        raise DistanceError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise DistanceError(f"{path}: unsupported maxval {maxval}")

    count = width * height
    if magic == b"P5":
        raw = data[pos + 1 : pos + 1 + count]  # single whitespace byte after maxval
        if len(raw) < count:
            raise DistanceError(f"{path}: truncated pixel data")
        values = np.frombuffer(raw, dtype=np.uint8).astype(float)
    else:
        tokens = data[pos:].split()
        if len(tokens) < count:
            raise DistanceError(f"{path}: truncated pixel data")
        values = np.array([int(t) for t in tokens[:count]], dtype=float)
    if np.any(values > maxval):
        raise DistanceError(f"{path}: pixel value exceeds maxval {maxval}")
    return Image(width=width, height=height, pixels=values / maxval)


def save_pgm(image: Image, path) -> None:
    """Write an image as ascii PGM with maxval 255."""
    values = np.rint(image.pixels * 255.0).astype(int)
    lines = [f"P2\n{image.width} {image.height}\n255\n"]
    for row in values:
        lines.append(" ".join(str(v) for v in row) + "\n")
    with open(path, "w", encoding="ascii") as fh:
        fh.writelines(lines)
