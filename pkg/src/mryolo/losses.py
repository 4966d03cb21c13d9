"""Composite detection loss: CIOU box regression + BCE objectness/class terms.

All terms are computed densely over the raw head maps and masked by the
target assignment, so the taped graph stays a fixed shape per batch. The
aspect-ratio weight alpha is treated as a constant during differentiation.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import Tensor
from .detector import STRIDES, DetectorSpec, TargetAssignment

EPS = 1e-9

LOSS_WEIGHTS = {"box": 0.05, "obj": 1.0, "cls": 0.5}


def _full(value, shape, dtype):
    return ops.const(np.broadcast_to(np.asarray(value, dtype=dtype), shape).copy(), dtype)


def ciou_tensor(px1, py1, px2, py2, pcx, pcy, pw, ph, tgt, mask_dtype):
    """Elementwise CIOU between predicted corners/geometry and constant targets."""
    tcx, tcy, tw, th = (ops.const(tgt[..., i], mask_dtype) for i in range(4))
    tx1 = ops.const(tgt[..., 0] - tgt[..., 2] / 2, mask_dtype)
    ty1 = ops.const(tgt[..., 1] - tgt[..., 3] / 2, mask_dtype)
    tx2 = ops.const(tgt[..., 0] + tgt[..., 2] / 2, mask_dtype)
    ty2 = ops.const(tgt[..., 1] + tgt[..., 3] / 2, mask_dtype)

    iw = ops.maximum(ops.sub(ops.minimum(px2, tx2), ops.maximum(px1, tx1)), 0.0)
    ih = ops.maximum(ops.sub(ops.minimum(py2, ty2), ops.maximum(py1, ty1)), 0.0)
    inter = ops.mul(iw, ih)
    union = ops.add(ops.sub(ops.add(ops.mul(pw, ph), ops.mul(tw, th)), inter), EPS)
    iou = ops.div(inter, union)

    rho2 = ops.add(
        ops.mul(ops.sub(pcx, tcx), ops.sub(pcx, tcx)),
        ops.mul(ops.sub(pcy, tcy), ops.sub(pcy, tcy)),
    )
    cw = ops.sub(ops.maximum(px2, tx2), ops.minimum(px1, tx1))
    chh = ops.sub(ops.maximum(py2, ty2), ops.minimum(py1, ty1))
    c2 = ops.add(ops.add(ops.mul(cw, cw), ops.mul(chh, chh)), EPS)

    ar = ops.sub(
        ops.arctan(ops.div(pw, ops.add(ph, EPS))),
        ops.arctan(ops.div(tw, ops.add(th, EPS))),
    )
    v = ops.mul(ops.mul(ar, ar), 4.0 / np.pi**2)
    alpha = ops.const(v.data / ((1.0 - iou.data) + v.data + EPS), mask_dtype)
    return ops.sub(ops.sub(iou, ops.div(rho2, c2)), ops.mul(alpha, v))


def detection_loss(raws, assignment: TargetAssignment, weights=None):
    """Returns (total scalar Tensor, component dict of floats).

    box: mean (1 - CIOU) over assigned anchors; obj: BCE over non-ignored
    positions; cls: per-class BCE summed at assigned positions. With no
    assignments the box/cls terms are zero and obj is still computed.
    """
    w = dict(LOSS_WEIGHTS)
    if weights:
        w.update(weights)
    spec = assignment.spec
    nc = spec.num_classes
    dtype = raws[0].dtype

    box_sum = obj_sum = cls_sum = None
    n_obj_positions = 0

    def acc(total, term):
        return term if total is None else ops.add(total, term)

    for si, raw in enumerate(raws):
        n, ch, s, _ = raw.shape
        per = 5 + nc
        stride = STRIDES[si]
        grid = np.arange(s, dtype=dtype)
        gx = np.broadcast_to(grid.reshape(1, 1, 1, s), (n, 1, s, s)).copy()
        gy = np.broadcast_to(grid.reshape(1, 1, s, 1), (n, 1, s, s)).copy()
        for ai in range(3):
            base = ai * per
            mask_np = assignment.obj[si][:, ai : ai + 1]
            noign_np = 1.0 - assignment.ignore[si][:, ai : ai + 1]
            n_obj_positions += int(noign_np.sum())
            mask = ops.const(mask_np.astype(dtype), dtype)
            noign = ops.const(noign_np.astype(dtype), dtype)

            tx = raw[:, base : base + 1]
            ty = raw[:, base + 1 : base + 2]
            tw = raw[:, base + 2 : base + 3]
            th = raw[:, base + 3 : base + 4]
            tobj = raw[:, base + 4 : base + 5]

            # objectness everywhere except ignored positions
            obj_sum = acc(obj_sum, ops.tsum(ops.mul(ops.bce_with_logits(tobj, mask), noign)))

            if assignment.num_assigned:
                aw, ah = spec.anchors[3 * si + ai]
                pcx = ops.mul(ops.add(ops.sigmoid(tx), ops.const(gx, dtype)), float(stride))
                pcy = ops.mul(ops.add(ops.sigmoid(ty), ops.const(gy, dtype)), float(stride))
                pw = ops.mul(ops.exp(tw), float(aw))
                ph = ops.mul(ops.exp(th), float(ah))
                half = 0.5
                px1 = ops.sub(pcx, ops.mul(pw, half))
                py1 = ops.sub(pcy, ops.mul(ph, half))
                px2 = ops.add(pcx, ops.mul(pw, half))
                py2 = ops.add(pcy, ops.mul(ph, half))
                tgt = assignment.boxes[si][:, ai : ai + 1].astype(dtype)
                ciou = ciou_tensor(px1, py1, px2, py2, pcx, pcy, pw, ph, tgt, dtype)
                box_sum = acc(box_sum, ops.tsum(ops.mul(ops.sub(1.0, ciou), mask)))

                cls_ids = assignment.cls[si][:, ai]  # (N,S,S)
                onehot = np.zeros((n, nc, s, s), dtype=dtype)
                for c in range(nc):
                    onehot[:, c][cls_ids == c] = 1.0
                cls_logits = raw[:, base + 5 : base + 5 + nc]
                cls_bce = ops.bce_with_logits(cls_logits, ops.const(onehot, dtype))
                cls_sum = acc(cls_sum, ops.tsum(ops.mul(cls_bce, mask)))

    n_pos = max(assignment.num_assigned, 1)
    box_mean = ops.mul(box_sum, 1.0 / n_pos) if box_sum is not None else None
    cls_mean = ops.mul(cls_sum, 1.0 / n_pos) if cls_sum is not None else None
    obj_mean = ops.mul(obj_sum, 1.0 / max(n_obj_positions, 1))

    total = ops.mul(obj_mean, w["obj"])
    components = {"obj": float(obj_mean.data)}
    if box_mean is not None:
        total = ops.add(total, ops.mul(box_mean, w["box"]))
        components["box"] = float(box_mean.data)
    else:
        components["box"] = 0.0
    if cls_mean is not None:
        total = ops.add(total, ops.mul(cls_mean, w["cls"]))
        components["cls"] = float(cls_mean.data)
    else:
        components["cls"] = 0.0
    components["total"] = float(total.data)
    return total, components
