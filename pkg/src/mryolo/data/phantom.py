"""Synthetic four-chamber phantoms.

Each image shows four non-overlapping elliptical 'chambers' on a speckled
dark background: two larger, more eccentric ventricles below two rounder
atria, the whole layout jittered by rotation, translation and scale, then
degraded with multiplicative speckle and blur. Ground-truth boxes are the
tight bounds of each ellipse. Generation is a pure function of
(seed, index), so datasets are reproducible anywhere.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .datasets import DETECTION_CLASSES, Dataset, Sample

# class layout in canonical (unrotated) coordinates: (cx, cy, a, b, tilt)
# ids follow DETECTION_CLASSES: LV, LA, RV, RA
_LAYOUT = {
    0: (0.36, 0.63, 0.130, 0.080, 0.35),   # LV: lower left, elongated
    1: (0.38, 0.32, 0.085, 0.066, 0.15),   # LA: upper left, rounder
    2: (0.65, 0.60, 0.115, 0.078, -0.25),  # RV: lower right
    3: (0.66, 0.31, 0.080, 0.070, -0.10),  # RA: upper right
}


def _ellipse_bbox(cx, cy, a, b, phi):
    hw = np.sqrt((a * np.cos(phi)) ** 2 + (b * np.sin(phi)) ** 2)
    hh = np.sqrt((a * np.sin(phi)) ** 2 + (b * np.cos(phi)) ** 2)
    return cx - hw, cy - hh, cx + hw, cy + hh


def _draw_params(rng):
    """One jittered layout; retried until the ellipses stay disjoint."""
    for _ in range(64):
        theta = rng.uniform(-0.3, 0.3)
        dx, dy = rng.uniform(-0.05, 0.05, size=2)
        gscale = rng.uniform(0.85, 1.1)
        out = {}
        for cid, (cx, cy, a, b, tilt) in _LAYOUT.items():
            jx, jy = rng.uniform(-0.02, 0.02, size=2)
            sa = a * gscale * rng.uniform(0.9, 1.1)
            sb = b * gscale * rng.uniform(0.9, 1.1)
            # rotate the center about the layout middle
            rx = (cx - 0.5) * np.cos(theta) - (cy - 0.5) * np.sin(theta) + 0.5
            ry = (cx - 0.5) * np.sin(theta) + (cy - 0.5) * np.cos(theta) + 0.5
            out[cid] = (rx + dx + jx, ry + dy + jy, sa, sb, tilt + theta)
        ok = True
        keys = sorted(out)
        for i in keys:
            x1, y1, x2, y2 = _ellipse_bbox(*out[i])
            if x1 < 0.02 or y1 < 0.02 or x2 > 0.98 or y2 > 0.98:
                ok = False
                break
            for j in keys:
                if j <= i:
                    continue
                d = np.hypot(out[i][0] - out[j][0], out[i][1] - out[j][1])
                if d < max(out[i][2], out[i][3]) + max(out[j][2], out[j][3]) + 0.01:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return out
    raise RuntimeError("phantom layout sampling failed to converge")


def make_phantom(size, seed, index):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    params = _draw_params(rng)

    base = np.full((size, size), 0.32, dtype=np.float64)
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx + 0.5) / size
    v = (yy + 0.5) / size
    gts = []
    for cid, (cx, cy, a, b, phi) in params.items():
        du, dv = u - cx, v - cy
        lu = du * np.cos(phi) + dv * np.sin(phi)
        lv = -du * np.sin(phi) + dv * np.cos(phi)
        r2 = (lu / a) ** 2 + (lv / b) ** 2
        base[r2 <= 1.0] = 0.08  # anechoic chamber interior
        base[(r2 > 1.0) & (r2 <= 1.45)] = 0.78  # bright myocardial rim
        gts.append((cid, _ellipse_bbox(cx, cy, a, b, phi)))

    speckle = rng.gamma(shape=9.0, scale=1.0 / 9.0, size=base.shape)
    img = gaussian_filter(base * speckle, sigma=1.0)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    image = np.repeat(img[None, :, :], 3, axis=0)
    gts = [(c, tuple(float(np.clip(v, 0.0, 1.0)) for v in box)) for c, box in gts]
    return Sample(image, gts, path=f"phantom-{seed}-{index}")


def synth_phantom(n, size=160, seed=0):
    """Dataset of n phantoms; every sample has one box per class."""
    if n < 1:
        raise ValueError("need n >= 1")
    samples = [make_phantom(size, seed, i) for i in range(n)]
    return Dataset(samples, list(DETECTION_CLASSES))
