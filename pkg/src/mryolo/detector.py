"""Three-scale anchor-based detector: SPP + FPN + PAN neck over a CSP backbone.

The heads emit raw maps of shape (N, 3*(5+num_classes), S, S) per scale,
channel-blocked per anchor as [tx, ty, tw, th, objectness, class logits].
Decoding follows the standard sigmoid-offset / exponential-size form:
center = (sigmoid(t) + cell) * stride, size = anchor * exp(t).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autograd import ShapeError, Tensor
from .backbone import Backbone, backbone_spec
from .boxes import Detection, diou_nms, wh_iou
from .nn import Conv2d, ConvBNAct, Module, ModuleList
from .ops import _sigmoid

STRIDES = (8, 16, 32)

# reference priors for 608-input models; fit your own with `mryolo anchors`
DEFAULT_ANCHORS_608 = np.array(
    [
        (12, 16), (19, 36), (40, 28),
        (36, 75), (76, 55), (72, 146),
        (142, 110), (192, 243), (459, 401),
    ],
    dtype=np.float32,
)

VARIANT_BLOCK_KINDS = {"baseline": "plain", "cbam": "cbam", "mrham": "mrham"}


def default_anchors(input_size):
    return np.round(DEFAULT_ANCHORS_608 * (input_size / 608.0), 2).astype(np.float32)


@dataclass
class DetectorSpec:
    input_size: int = 608
    num_classes: int = 4
    class_names: list = field(default_factory=lambda: ["LV", "LA", "RV", "RA"])
    anchors: np.ndarray = None  # (9,2) input pixels, ascending area
    backbone_preset: str = "cspdarknet53-slim"
    variant: str = "mrham"
    width: float = 1.0
    attention_mode: str = "rca_then_rsa"

    def __post_init__(self):
        if self.anchors is None:
            self.anchors = default_anchors(self.input_size)
        self.anchors = np.asarray(self.anchors, dtype=np.float32).reshape(-1, 2)
        self.validate()

    def validate(self):
        if self.input_size % 32 != 0 or self.input_size <= 0:
            raise ValueError(f"input_size {self.input_size} must be a positive multiple of 32")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if len(self.class_names) != self.num_classes:
            raise ValueError(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        if self.anchors.shape != (9, 2) or np.any(self.anchors <= 0):
            raise ValueError("anchors must be 9 positive (w,h) pairs")
        areas = self.anchors[:, 0] * self.anchors[:, 1]
        if np.any(np.diff(areas) < 0):
            raise ValueError("anchors must be sorted by ascending area")
        if self.variant not in VARIANT_BLOCK_KINDS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def anchors_for_scale(self, scale_idx):
        return self.anchors[3 * scale_idx : 3 * scale_idx + 3]

    def grid_sizes(self):
        return tuple(self.input_size // s for s in STRIDES)

    def backbone(self):
        return backbone_spec(
            self.backbone_preset,
            block_kind=VARIANT_BLOCK_KINDS[self.variant],
            width=self.width,
            attention_mode=self.attention_mode,
        )


class SPP(Module):
    """Parallel max-pools (5, 9, 13, stride 1) concatenated with the input."""

    KERNELS = (5, 9, 13)

    def forward(self, x):
        pooled = [ops.max_pool2d(x, k, stride=1, pad=k // 2) for k in self.KERNELS]
        return ops.concat([x] + pooled, axis=1)


class ConvSeq(Module):
    def __init__(self, rng, plan):
        super().__init__()
        self.seq = ModuleList(
            ConvBNAct(rng, cin, cout, k, act="leaky") for cin, cout, k in plan
        )

    def forward(self, x):
        for layer in self.seq:
            x = layer(x)
        return x


def _five_conv(rng, cin, mid):
    return ConvSeq(
        rng,
        [(cin, mid, 1), (mid, mid * 2, 3), (mid * 2, mid, 1), (mid, mid * 2, 3), (mid * 2, mid, 1)],
    )


class Neck(Module):
    """SPP on the deepest map, top-down fusion, then bottom-up aggregation."""

    def __init__(self, rng, channels):
        super().__init__()
        c3, c4, c5 = channels
        h3, h4, h5 = c3 // 2, c4 // 2, c5 // 2
        self.pre_spp = ConvSeq(rng, [(c5, h5, 1), (h5, c5, 3), (c5, h5, 1)])
        self.spp = SPP()
        self.post_spp = ConvSeq(rng, [(4 * h5, h5, 1), (h5, c5, 3), (c5, h5, 1)])

        self.lat4 = ConvBNAct(rng, c4, h4, 1, act="leaky")
        self.up5 = ConvBNAct(rng, h5, h4, 1, act="leaky")
        self.fuse4 = _five_conv(rng, 2 * h4, h4)

        self.lat3 = ConvBNAct(rng, c3, h3, 1, act="leaky")
        self.up4 = ConvBNAct(rng, h4, h3, 1, act="leaky")
        self.fuse3 = _five_conv(rng, 2 * h3, h3)

        self.down3 = ConvBNAct(rng, h3, h4, 3, stride=2, act="leaky")
        self.pan4 = _five_conv(rng, 2 * h4, h4)
        self.down4 = ConvBNAct(rng, h4, h5, 3, stride=2, act="leaky")
        self.pan5 = _five_conv(rng, 2 * h5, h5)
        self.out_channels = (h3, h4, h5)

    def forward(self, c3, c4, c5):
        m5 = self.post_spp(self.spp(self.pre_spp(c5)))
        m4 = self.fuse4(ops.concat([self.lat4(c4), ops.upsample_nearest2x(self.up5(m5))], axis=1))
        p3 = self.fuse3(ops.concat([self.lat3(c3), ops.upsample_nearest2x(self.up4(m4))], axis=1))
        p4 = self.pan4(ops.concat([self.down3(p3), m4], axis=1))
        p5 = self.pan5(ops.concat([self.down4(p4), m5], axis=1))
        return p3, p4, p5


class Head(Module):
    def __init__(self, rng, in_ch, num_classes):
        super().__init__()
        self.stem = ConvBNAct(rng, in_ch, in_ch * 2, 3, act="leaky")
        self.out = Conv2d(rng, in_ch * 2, 3 * (5 + num_classes), 1, bias=True)
        self.out.weight.data *= 0.1  # keep initial offsets/sizes near the priors

    def forward(self, x):
        return self.out(self.stem(x))


class Detector(Module):
    def __init__(self, spec: DetectorSpec, rng):
        super().__init__()
        self.spec = spec
        self.backbone = Backbone(spec.backbone(), rng)
        self.neck = Neck(rng, self.backbone.out_channels)
        self.heads = ModuleList(
            Head(rng, ch, spec.num_classes) for ch in self.neck.out_channels
        )

    def forward(self, images):
        if images.shape[1] != 3:
            raise ShapeError(f"detector expects (N,3,H,W) images, got {images.shape}")
        c3, c4, c5 = self.backbone(images)
        feats = self.neck(c3, c4, c5)
        return tuple(head(f) for head, f in zip(self.heads, feats))

    def reseed_dropblock(self, seed):
        self.backbone.reseed_dropblock(seed)


def build_detector(spec: DetectorSpec, seed=0):
    return Detector(spec, np.random.default_rng(np.random.SeedSequence([0x9E77, seed])))


# --- decoding ----------------------------------------------------------------


def decode_scale(raw, anchors, stride, num_classes):
    """Raw map (N, 3*(5+nc), S, S) -> (boxes_xyxy (N,M,4) px, obj (N,M), cls (N,M,nc))."""
    n, ch, s, _ = raw.shape
    per = 5 + num_classes
    if ch != 3 * per:
        raise ShapeError(f"raw map has {ch} channels, expected {3 * per}")
    r = raw.reshape(n, 3, per, s, s)
    grid = np.arange(s, dtype=raw.dtype)
    cx = (_sigmoid(r[:, :, 0]) + grid.reshape(1, 1, 1, s)) * stride
    cy = (_sigmoid(r[:, :, 1]) + grid.reshape(1, 1, s, 1)) * stride
    pw = anchors[:, 0].reshape(1, 3, 1, 1) * np.exp(r[:, :, 2])
    ph = anchors[:, 1].reshape(1, 3, 1, 1) * np.exp(r[:, :, 3])
    obj = _sigmoid(r[:, :, 4])
    cls = _sigmoid(r[:, :, 5:])  # (N,3,nc,S,S)
    boxes = np.stack([cx - pw / 2, cy - ph / 2, cx + pw / 2, cy + ph / 2], axis=-1)
    m = 3 * s * s
    return (
        boxes.reshape(n, m, 4),
        obj.reshape(n, m),
        cls.transpose(0, 1, 3, 4, 2).reshape(n, m, num_classes),
    )


def decode_raws(raws, spec: DetectorSpec):
    """Concatenate decoded predictions from all three scales."""
    parts = [
        decode_scale(raw, spec.anchors_for_scale(i), STRIDES[i], spec.num_classes)
        for i, raw in enumerate(raws)
    ]
    boxes = np.concatenate([p[0] for p in parts], axis=1)
    obj = np.concatenate([p[1] for p in parts], axis=1)
    cls = np.concatenate([p[2] for p in parts], axis=1)
    return boxes, obj, cls


def raws_to_detections(raws, spec, conf_threshold=0.25, iou_threshold=0.45):
    """Per-image DIoU-NMS'd detections; confidence = objectness * class score."""
    boxes, obj, cls = decode_raws(raws, spec)
    out = []
    for n in range(boxes.shape[0]):
        conf = obj[n][:, None] * cls[n]
        class_id = conf.argmax(axis=1)
        best = conf[np.arange(len(class_id)), class_id]
        keep = best >= conf_threshold
        dets = [
            Detection(box=boxes[n, i].astype(np.float64), class_id=int(class_id[i]),
                      confidence=float(best[i]))
            for i in np.flatnonzero(keep)
        ]
        out.append(diou_nms(dets, iou_threshold=iou_threshold, conf_threshold=conf_threshold))
    return out


# --- target assignment --------------------------------------------------------


def encode_box(cxcywh_px, anchor, stride, cell):
    """Inverse of the decode form, for one box against its assigned anchor."""
    cx, cy, w, h = cxcywh_px
    sx = cx / stride - cell[0]
    sy = cy / stride - cell[1]
    sx = np.clip(sx, 1e-6, 1 - 1e-6)
    sy = np.clip(sy, 1e-6, 1 - 1e-6)
    return (
        float(np.log(sx / (1 - sx))),
        float(np.log(sy / (1 - sy))),
        float(np.log(w / anchor[0])),
        float(np.log(h / anchor[1])),
    )


class TargetAssignment:
    """Dense per-scale training targets for one image batch.

    obj/ignore: (N,3,S,S); boxes: (N,3,S,S,4) as cxcywh in input pixels;
    cls: (N,3,S,S) int class ids (-1 where unassigned).
    """

    def __init__(self, spec, batch_size):
        self.spec = spec
        self.obj = []
        self.ignore = []
        self.boxes = []
        self.cls = []
        for s in spec.grid_sizes():
            self.obj.append(np.zeros((batch_size, 3, s, s), dtype=np.float32))
            self.ignore.append(np.zeros((batch_size, 3, s, s), dtype=np.float32))
            self.boxes.append(np.ones((batch_size, 3, s, s, 4), dtype=np.float32))
            self.cls.append(np.full((batch_size, 3, s, s), -1, dtype=np.int64))
        self.num_assigned = 0


def assign_targets(gt_lists, spec: DetectorSpec):
    """Assign each ground truth to its best-overlap anchor at its center cell.

    gt_lists: per image, a list of (class_id, box_xyxy_normalized). Anchor
    positions overlapping any ground truth above 0.5 IoU (without being the
    assigned cell) are marked ignore and take no objectness penalty.
    """
    ta = TargetAssignment(spec, len(gt_lists))
    size = spec.input_size
    for n, gts in enumerate(gt_lists):
        if not gts:
            continue
        for class_id, box in gts:
            x1, y1, x2, y2 = box
            w, h = (x2 - x1) * size, (y2 - y1) * size
            if w <= 0 or h <= 0:
                raise ValueError(f"degenerate ground-truth box {box}")
            best = int(wh_iou([(w, h)], spec.anchors)[0].argmax())
            si, ai = divmod(best, 3)
            s = spec.grid_sizes()[si]
            cx, cy = (x1 + x2) / 2 * size, (y1 + y2) / 2 * size
            gi = min(int(cx / STRIDES[si]), s - 1)
            gj = min(int(cy / STRIDES[si]), s - 1)
            if ta.obj[si][n, ai, gj, gi] == 1.0:
                warnings.warn(
                    f"image {n}: anchor collision at scale {si} cell ({gi},{gj}); "
                    "later ground truth wins"
                )
                ta.num_assigned -= 1
            ta.obj[si][n, ai, gj, gi] = 1.0
            ta.boxes[si][n, ai, gj, gi] = (cx, cy, w, h)
            ta.cls[si][n, ai, gj, gi] = class_id
            ta.num_assigned += 1
        _mark_ignores(ta, n, gts, spec)
    return ta


def _mark_ignores(ta, n, gts, spec):
    size = spec.input_size
    gt_xyxy = np.array([g[1] for g in gts], dtype=np.float64) * size
    for si, s in enumerate(spec.grid_sizes()):
        centers = (np.arange(s) + 0.5) * STRIDES[si]
        cx, cy = np.meshgrid(centers, centers)  # (S,S), cx varies along axis 1
        for ai in range(3):
            aw, ah = spec.anchors[3 * si + ai]
            ax1, ay1 = cx - aw / 2, cy - ah / 2
            ax2, ay2 = cx + aw / 2, cy + ah / 2
            best_iou = np.zeros((s, s))
            for x1, y1, x2, y2 in gt_xyxy:
                iw = np.minimum(ax2, x2) - np.maximum(ax1, x1)
                ih = np.minimum(ay2, y2) - np.maximum(ay1, y1)
                inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
                union = aw * ah + (x2 - x1) * (y2 - y1) - inter
                best_iou = np.maximum(best_iou, inter / np.maximum(union, 1e-9))
            mask = (best_iou > 0.5) & (ta.obj[si][n, ai] == 0.0)
            ta.ignore[si][n, ai][mask] = 1.0
