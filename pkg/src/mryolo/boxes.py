"""Box geometry: IoU family, DIoU-suppressed NMS, and anchor clustering.

Boxes are (x_min, y_min, x_max, y_max), pixels or normalized. Everything
here is pure and side-effect free; the differentiable CIOU used inside the
training loss lives in losses.py and is tested against the scalar forms
here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-9


@dataclass
class Detection:
    box: np.ndarray  # (4,) xyxy
    class_id: int
    confidence: float


def box_area(b):
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def iou(a, b):
    """Intersection over union; 0 for disjoint or zero-area boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def diou(a, b):
    """IoU penalized by normalized center distance (the NMS overlap measure)."""
    return iou(a, b) - _center_term(a, b)


def _center_term(a, b):
    rho2 = ((a[0] + a[2]) / 2 - (b[0] + b[2]) / 2) ** 2 + (
        (a[1] + a[3]) / 2 - (b[1] + b[3]) / 2
    ) ** 2
    cw = max(a[2], b[2]) - min(a[0], b[0])
    ch = max(a[3], b[3]) - min(a[1], b[1])
    return rho2 / (cw * cw + ch * ch + EPS)


def ciou(a, b):
    """Complete IoU: overlap, center distance, and aspect-ratio consistency."""
    i = iou(a, b)
    wa, ha = a[2] - a[0], a[3] - a[1]
    wb, hb = b[2] - b[0], b[3] - b[1]
    v = (4.0 / np.pi**2) * (
        np.arctan(wa / (ha + EPS)) - np.arctan(wb / (hb + EPS))
    ) ** 2
    alpha = v / ((1.0 - i) + v + EPS)
    return i - _center_term(a, b) - alpha * v


def ciou_loss(a, b):
    return 1.0 - ciou(a, b)


def diou_nms(dets, iou_threshold=0.45, conf_threshold=0.25):
    """Greedy per-class suppression using the DIoU overlap measure.

    Keeps detections in descending confidence (stable for ties); a survivor
    suppresses any same-class box whose IoU minus the normalized center
    distance reaches iou_threshold.
    """
    if not 0.0 < iou_threshold < 1.0 or not 0.0 < conf_threshold < 1.0:
        raise ValueError("thresholds must lie in (0, 1)")
    kept = []
    dets = [d for d in dets if d.confidence >= conf_threshold]
    for cls in sorted({d.class_id for d in dets}):
        pool = [d for d in dets if d.class_id == cls]
        order = sorted(range(len(pool)), key=lambda i: -pool[i].confidence)
        while order:
            top = order.pop(0)
            kept.append(pool[top])
            order = [i for i in order if diou(pool[top].box, pool[i].box) < iou_threshold]
    return kept


# --- anchor clustering -------------------------------------------------------


def wh_iou(wh, centroids):
    """IoU of co-centered boxes: (n,2) x (k,2) -> (n,k)."""
    wh = np.asarray(wh, dtype=np.float64)[:, None, :]
    cent = np.asarray(centroids, dtype=np.float64)[None, :, :]
    inter = np.minimum(wh[..., 0], cent[..., 0]) * np.minimum(wh[..., 1], cent[..., 1])
    union = wh[..., 0] * wh[..., 1] + cent[..., 0] * cent[..., 1] - inter
    return inter / np.maximum(union, EPS)


def mean_best_iou(wh, centroids):
    return float(wh_iou(wh, centroids).max(axis=1).mean())


def kmeans_anchors(wh_list, k=9, seed=0, max_iters=300):
    """Cluster (w,h) pairs under the 1 - IoU distance of co-centered boxes.

    Seeded init samples k boxes without replacement; Lloyd iterations run to
    an assignment fixed point (or max_iters), with empty clusters reseeded to
    the box farthest from its centroid. An update that would lower the mean
    best-IoU is rolled back and terminates, so the overlap statistic is
    non-decreasing. Returns (anchors sorted by area, mean best-IoU).
    """
    wh = np.asarray(wh_list, dtype=np.float64)
    if wh.ndim != 2 or wh.shape[1] != 2:
        raise ValueError(f"expected (n,2) width/height list, got {wh.shape}")
    if np.any(wh <= 0):
        raise ValueError("anchor fitting needs strictly positive box dims")
    n = len(wh)
    if n < k:
        raise ValueError(f"need at least k={k} boxes, got {n}")

    rng = np.random.default_rng(seed)
    centroids = wh[rng.choice(n, size=k, replace=False)].copy()
    assign = np.full(n, -1)
    for _ in range(max_iters):
        dist = 1.0 - wh_iou(wh, centroids)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        new_centroids = centroids.copy()
        for c in range(k):
            members = wh[assign == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:
                worst = dist[np.arange(n), assign].argmax()
                new_centroids[c] = wh[worst]
        if mean_best_iou(wh, new_centroids) < mean_best_iou(wh, centroids):
            break
        centroids = new_centroids

    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
    anchors = centroids[order].astype(np.float32)
    return anchors, mean_best_iou(wh, anchors)


def save_anchors(path, anchors):
    """Anchor file: one 'w h' pair per line, input-resolution pixels."""
    with open(path, "w") as f:
        for w, h in anchors:
            f.write(f"{w:.4f} {h:.4f}\n")


def load_anchors(path):
    anchors = np.loadtxt(path, dtype=np.float64).reshape(-1, 2)
    if len(anchors) != 9:
        raise ValueError(f"anchor file {path} has {len(anchors)} entries, expected 9")
    areas = anchors[:, 0] * anchors[:, 1]
    if np.any(np.diff(areas) < 0):
        raise ValueError(f"anchor file {path} is not sorted by ascending area")
    return anchors.astype(np.float32)


# --- coordinate helpers -----------------------------------------------------


def cxcywh_to_xyxy(arr):
    arr = np.asarray(arr, dtype=np.float64)
    cx, cy, w, h = arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3]
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def xyxy_to_cxcywh(arr):
    arr = np.asarray(arr, dtype=np.float64)
    x1, y1, x2, y2 = arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3]
    return np.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], axis=-1)
