"""Dense multi-scale SIFT-style descriptors and RootSIFT normalization.

Descriptors are upright (no orientation assignment), 4x4 spatial cells x 8
orientation bins, with a Gaussian window of sigma = width / 2 and trilinear
(spatial x orientation) vote splitting.  Element ``(i * 4 + j) * 8 + o`` holds
cell row ``i``, cell column ``j``, orientation bin ``o`` where bin 0 is a
gradient pointing along +x (dark to bright, left to right).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from mcvl import _backend

DESC_DIM = 128


class ImageTooSmallError(ValueError):
    """Raised when no descriptor region fits inside the image."""


@dataclass(frozen=True)
class FeatureConfig:
    spacing: int = 2
    widths: tuple = (16, 24, 32, 40)
    # pre-smoothing sigma = cell size / magnif
    magnif: float = 6.0
    clip: float = 0.2


@dataclass
class DescriptorSet:
    descriptors: np.ndarray = field(default_factory=lambda: np.zeros((0, DESC_DIM)))
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.descriptors)


def check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0 or img.max(initial=0.0) > 1:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


def to_gray(rgb) -> np.ndarray:
    """Luma conversion for colour input (values in [0, 1])."""
    rgb = np.asarray(rgb, dtype=float)
    return rgb[..., :3] @ np.array([0.299, 0.587, 0.114])


def grid_size(height: int, width: int, region: int, spacing: int) -> int:
    if region > height or region > width:
        return 0
    return ((height - region) // spacing + 1) * ((width - region) // spacing + 1)


def _bin_table(width: int) -> np.ndarray:
    """(4, width) window x tent weights for each cell along one axis."""
    cell = width / 4.0
    pc = np.arange(width) + 0.5
    window = np.exp(-((pc - width / 2.0) ** 2) / (2.0 * (width / 2.0) ** 2))
    centers = (np.arange(4) + 0.5) * cell
    tent = np.maximum(0.0, 1.0 - np.abs(pc[None, :] - centers[:, None]) / cell)
    return np.ascontiguousarray(tent * window[None, :])


def _orientation_votes(img: np.ndarray, sigma: float):
    sm = gaussian_filter(img, sigma, mode="nearest") if sigma > 0 else img
    gy, gx = np.gradient(sm)
    mag = np.hypot(gx, gy)
    t = np.mod(np.arctan2(gy, gx), 2 * np.pi) / (2 * np.pi / 8)
    lo = np.floor(t)
    frac = t - lo
    b_lo = np.ascontiguousarray(lo.astype(np.int64) % 8)
    return np.ascontiguousarray(mag * (1 - frac)), np.ascontiguousarray(mag * frac), b_lo


def _normalize_sift(raw: np.ndarray, clip: float) -> np.ndarray:
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    live = norm[:, 0] > 1e-12
    out = np.zeros_like(raw)
    d = raw[live] / norm[live]
    d = np.minimum(d, clip)
    out[live] = d / np.linalg.norm(d, axis=1, keepdims=True)
    return out


def extract_dense(img, cfg: FeatureConfig = FeatureConfig()) -> DescriptorSet:
    """SIFT descriptors on a regular grid at every configured region width.

    Rows are ordered scale-major, then grid row, then grid column.  Regions
    must fit entirely inside the image.  Flat patches give all-zero rows.
    """
    img = check_image(img)
    H, W = img.shape
    descs, kps = [], []
    for width in cfg.widths:
        if grid_size(H, W, width, cfg.spacing) == 0:
            continue
        w_lo, w_hi, b_lo = _orientation_votes(img, (width / 4.0) / cfg.magnif)
        raw = _backend.sift_bin(w_lo, w_hi, b_lo, _bin_table(width), cfg.spacing)
        descs.append(_normalize_sift(raw, cfg.clip))
        ys = np.arange(0, H - width + 1, cfg.spacing) + (width - 1) / 2.0
        xs = np.arange(0, W - width + 1, cfg.spacing) + (width - 1) / 2.0
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        kps.append(np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, float(width))]))
    if not descs:
        raise ImageTooSmallError(
            f"image {W}x{H} is smaller than the smallest region width {min(cfg.widths)}"
        )
    return DescriptorSet(np.vstack(descs), np.vstack(kps))


def root_sift(ds):
    """L1-normalize each row then take the element-wise square root.

    Accepts a DescriptorSet or a bare (M, d) array and returns the same kind.
    All-zero rows are passed through.
    """
    X = ds.descriptors if isinstance(ds, DescriptorSet) else np.asarray(ds, dtype=float)
    if np.any(X < 0):
        raise ValueError("RootSIFT requires non-negative descriptors")
    l1 = X.sum(axis=1, keepdims=True)
    out = np.sqrt(np.divide(X, l1, out=np.zeros_like(X, dtype=float), where=l1 > 0))
    if isinstance(ds, DescriptorSet):
        return DescriptorSet(out, ds.keypoints.copy())
    return out
