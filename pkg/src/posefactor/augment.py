"""View-construction pipelines: stochastic (pose-preserving) augmentation
and pose augmentation (horizontal flip).

The stochastic pipeline applies, in this fixed order: crop-resize, color
jitter, Gaussian blur, Sobel edge view. None of these mirror the image, so
the binary pose label of a synthetic face is preserved by contract. The
Sobel view maps to gradient magnitude (even under mirroring), so it
commutes exactly with horizontal flips.

RNG draw order per call, for reproducibility and for recomputing crop
windows in tests (draws happen only for enabled ops; "applied" coins do
not gate the parameter draws that follow them):

    crop:   side_frac, frac_y, frac_x
    jitter: coin, brightness, contrast, saturation
    blur:   coin, sigma
    sobel:  coin
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import AugConfig
from .errors import ValidationError
from .synthfaces import ImageBatch

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) array, half-pixel-center convention:
    src = (dst + 0.5) * (in / out) - 0.5, edges clamped."""
    c, h, w = image.shape
    if (h, w) == (out_h, out_w):
        return image.astype(np.float32).copy()
    ys = (np.arange(out_h, dtype=np.float32) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float32) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0).astype(np.float32)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0).astype(np.float32)[None, None, :]
    rows0 = image[:, y0]
    rows1 = image[:, y1]
    top = rows0[:, :, x0] * (1.0 - wx) + rows0[:, :, x1] * wx
    bottom = rows1[:, :, x0] * (1.0 - wx) + rows1[:, :, x1] * wx
    return (top * (1.0 - wy) + bottom * wy).astype(np.float32)


def crop_window(rng: np.random.Generator, height: int, width: int,
                min_side: float, max_side: float) -> tuple[int, int, int]:
    """Draw (y0, x0, side) for a square crop; consumes exactly 3 uniforms."""
    side_frac = rng.uniform(min_side, max_side)
    frac_y = rng.uniform()
    frac_x = rng.uniform()
    side = max(8, int(round(side_frac * min(height, width))))
    side = min(side, height, width)
    y0 = int(round(frac_y * (height - side)))
    x0 = int(round(frac_x * (width - side)))
    return y0, x0, side


def sobel_view(image: np.ndarray) -> np.ndarray:
    """Edge-magnitude view, replicated over channels; commutes with flips."""
    lum = np.tensordot(_LUMA, image, axes=(0, 0))
    gx = ndimage.sobel(lum, axis=1, mode="reflect")
    gy = ndimage.sobel(lum, axis=0, mode="reflect")
    mag = np.sqrt(gx * gx + gy * gy) * np.float32(0.25)
    return np.clip(np.broadcast_to(mag[None], image.shape), 0.0, 1.0).astype(np.float32)


def stochastic_augment(image: np.ndarray, rng: np.random.Generator,
                       config: AugConfig) -> np.ndarray:
    """Pose-preserving stochastic view of a (3, H, W) image in [0, 1].

    With every op disabled this is the identity. The output always has the
    input shape and values clamped to [0, 1]. Horizontal flipping is never
    applied here; that is pose_augment's job.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValidationError(f"expected (3, H, W) image, got {image.shape}")
    config.validate()
    out = image.astype(np.float32)
    _, h, w = out.shape

    if config.crop:
        y0, x0, side = crop_window(rng, h, w, config.crop_min_side, config.crop_max_side)
        if (side, side) != (h, w) or (y0, x0) != (0, 0):
            out = resize_bilinear(out[:, y0:y0 + side, x0:x0 + side], h, w)

    if config.jitter:
        apply = rng.uniform() < config.jitter_prob
        b = rng.uniform(-config.brightness, config.brightness)
        c = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast)
        s = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation)
        if apply:
            out = out + np.float32(b)
            mean = out.mean(dtype=np.float32)
            out = mean + (out - mean) * np.float32(c)
            gray = np.tensordot(_LUMA, out, axes=(0, 0))[None]
            out = gray + (out - gray) * np.float32(s)

    if config.blur:
        apply = rng.uniform() < config.blur_prob
        sigma = rng.uniform(config.blur_min_sigma, config.blur_max_sigma)
        if apply:
            out = ndimage.gaussian_filter(out, sigma=(0.0, sigma, sigma),
                                          mode="reflect").astype(np.float32)

    if config.sobel and rng.uniform() < config.sobel_prob:
        out = sobel_view(out)

    return np.clip(out, 0.0, 1.0).astype(np.float32)


def pose_augment(image: np.ndarray) -> np.ndarray:
    """Horizontal mirror: output column x = input column (W-1-x)."""
    if image.ndim != 3:
        raise ValidationError(f"expected (C, H, W) image, got {image.shape}")
    return np.ascontiguousarray(image[:, :, ::-1])


@dataclass
class ViewBundle:
    """Per-step views: two positive (pose-preserving) views of each image
    and M pose-flipped negative views. Positive views keep the source pose
    label; negatives carry the flipped label by construction."""

    pos_a: np.ndarray           # (N, 3, H, W)
    pos_b: np.ndarray           # (N, 3, H, W)
    negs: np.ndarray            # (M, N, 3, H, W)
    ids: list[str]

    @property
    def num_negatives(self) -> int:
        return self.negs.shape[0]


def make_views(batch: ImageBatch, rng: np.random.Generator, m: int,
               config: AugConfig) -> ViewBundle:
    """Build the training views for one batch.

    Per image, in draw order: positive view a, positive view b (independent
    stochastic_augment draws), then M negatives, each a pose_augment
    followed by a stochastic_augment draw.
    """
    if m < 1:
        raise ValidationError(f"need at least one pose negative, got M={m}")
    batch.validate()
    n = batch.data.shape[0]
    pos_a = np.empty_like(batch.data)
    pos_b = np.empty_like(batch.data)
    negs = np.empty((m,) + batch.data.shape, dtype=np.float32)
    for i in range(n):
        img = batch.data[i]
        pos_a[i] = stochastic_augment(img, rng, config)
        pos_b[i] = stochastic_augment(img, rng, config)
        flipped = pose_augment(img)
        for k in range(m):
            negs[k, i] = stochastic_augment(flipped, rng, config)
    return ViewBundle(pos_a=pos_a, pos_b=pos_b, negs=negs, ids=list(batch.ids))
