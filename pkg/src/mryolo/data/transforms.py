"""Geometric transforms: letterbox resize and four-image mosaic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Sample
from .images import resize_bilinear

PAD_VALUE = 0.5


@dataclass
class LetterboxTransform:
    scale: float
    pad_x: int
    pad_y: int
    target: int

    def box_to_network(self, box_norm, orig_w, orig_h):
        """Normalized original-image box -> normalized letterboxed box."""
        x1, y1, x2, y2 = box_norm
        t = self.target
        return (
            (x1 * orig_w * self.scale + self.pad_x) / t,
            (y1 * orig_h * self.scale + self.pad_y) / t,
            (x2 * orig_w * self.scale + self.pad_x) / t,
            (y2 * orig_h * self.scale + self.pad_y) / t,
        )

    def box_to_image(self, box_px):
        """Letterboxed pixel box -> original-image pixel box."""
        x1, y1, x2, y2 = box_px
        return (
            (x1 - self.pad_x) / self.scale,
            (y1 - self.pad_y) / self.scale,
            (x2 - self.pad_x) / self.scale,
            (y2 - self.pad_y) / self.scale,
        )


def letterbox(sample: Sample, target: int):
    """Aspect-preserving resize onto a gray target x target canvas."""
    if target % 32 != 0:
        raise ValueError(f"letterbox target {target} must be a multiple of 32")
    _, h, w = sample.image.shape
    scale = min(target / w, target / h)
    new_w, new_h = int(round(w * scale)), int(round(h * scale))
    pad_x, pad_y = (target - new_w) // 2, (target - new_h) // 2
    canvas = np.full((3, target, target), PAD_VALUE, dtype=np.float32)
    canvas[:, pad_y : pad_y + new_h, pad_x : pad_x + new_w] = resize_bilinear(
        sample.image, new_h, new_w
    )
    tf = LetterboxTransform(scale=scale, pad_x=pad_x, pad_y=pad_y, target=target)
    gts = [(c, tf.box_to_network(b, w, h)) for c, b in sample.gts]
    return Sample(canvas, gts, path=sample.path), tf


def _place_region(canvas, gts_out, sample, region, scale, rng):
    """Scale a sample, crop/pad it into `region` of the canvas, map its boxes."""
    x0, y0, x1, y1 = region
    rh, rw = y1 - y0, x1 - x0
    if rh <= 0 or rw <= 0:
        return
    _, h, w = sample.image.shape
    sh, sw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    scaled = resize_bilinear(sample.image, sh, sw)
    # crop start inside the scaled image; pad offset when it is smaller
    cy = int(rng.integers(0, max(sh - rh, 0) + 1))
    cx = int(rng.integers(0, max(sw - rw, 0) + 1))
    py = int(rng.integers(0, max(rh - sh, 0) + 1))
    px = int(rng.integers(0, max(rw - sw, 0) + 1))
    ch = min(rh - py, sh - cy)
    cw = min(rw - px, sw - cx)
    canvas[:, y0 + py : y0 + py + ch, x0 + px : x0 + px + cw] = scaled[
        :, cy : cy + ch, cx : cx + cw
    ]
    t = canvas.shape[1]
    for class_id, (bx1, by1, bx2, by2) in sample.gts:
        # original -> scaled px -> region-local -> canvas px
        gx1 = bx1 * sw - cx + px + x0
        gx2 = bx2 * sw - cx + px + x0
        gy1 = by1 * sh - cy + py + y0
        gy2 = by2 * sh - cy + py + y0
        area = (gx2 - gx1) * (gy2 - gy1)
        kx1, ky1 = max(gx1, x0 + px), max(gy1, y0 + py)
        kx2 = min(gx2, x0 + px + cw)
        ky2 = min(gy2, y0 + py + ch)
        if kx2 <= kx1 or ky2 <= ky1:
            continue
        if (kx2 - kx1) * (ky2 - ky1) < 0.2 * area:
            continue  # drop slivers left by the crop
        gts_out.append((class_id, (kx1 / t, ky1 / t, kx2 / t, ky2 / t)))


def mosaic(samples, target, rng):
    """Stitch four samples around a random center with random rescaling."""
    if len(samples) != 4:
        raise ValueError(f"mosaic needs exactly 4 samples, got {len(samples)}")
    canvas = np.full((3, target, target), PAD_VALUE, dtype=np.float32)
    cx = int(rng.integers(int(0.3 * target), int(0.7 * target) + 1))
    cy = int(rng.integers(int(0.3 * target), int(0.7 * target) + 1))
    regions = [
        (0, 0, cx, cy),
        (cx, 0, target, cy),
        (0, cy, cx, target),
        (cx, cy, target, target),
    ]
    gts = []
    for sample, region in zip(samples, regions):
        scale = float(rng.uniform(0.5, 1.5))
        _place_region(canvas, gts, sample, region, scale, rng)
    return Sample(canvas, gts, path="mosaic")


def hflip(sample: Sample):
    img = sample.image[:, :, ::-1].copy()
    gts = [(c, (1.0 - x2, y1, 1.0 - x1, y2)) for c, (x1, y1, x2, y2) in sample.gts]
    return Sample(img, gts, path=sample.path)
