#!/usr/bin/env python3
"""Standalone scalar CIoU evaluation used to freeze the fixtures in test_box.cpp.

Boxes are (cx, cy, w, h). Everything is evaluated term by term with plain
floats, independent of the C++ implementation.
"""
import math


def corners(b):
    cx, cy, w, h = b
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def ciou(pred, gt):
    px1, py1, px2, py2 = corners(pred)
    gx1, gy1, gx2, gy2 = corners(gt)
    iw = max(0.0, min(px2, gx2) - max(px1, gx1))
    ih = max(0.0, min(py2, gy2) - max(py1, gy1))
    inter = iw * ih
    union = pred[2] * pred[3] + gt[2] * gt[3] - inter
    iou = inter / union
    d = math.hypot(pred[0] - gt[0], pred[1] - gt[1])
    c = math.hypot(max(px2, gx2) - min(px1, gx1), max(py2, gy2) - min(py1, gy1))
    v = 4 / math.pi ** 2 * (math.atan(gt[2] / gt[3]) - math.atan(pred[2] / pred[3])) ** 2
    alpha = v / ((1 - iou) + v) if (1 - iou) + v > 0 else 0.0
    return {
        "iou": iou,
        "unsquared": 1 - iou + d / c + alpha * v,
        "squared": 1 - iou + (d / c) ** 2 + alpha * v,
        "v": v,
        "alpha": alpha,
    }


if __name__ == "__main__":
    cases = [
        ((0.0, 0.0, 2.0, 2.0), (2.0, 0.0, 1.0, 1.0)),
        ((0.0, 0.0, 3.0, 1.0), (1.0, 0.5, 1.0, 2.0)),
        ((5.0, 5.0, 4.0, 2.0), (5.5, 4.0, 2.0, 3.0)),
    ]
    for pred, gt in cases:
        r = ciou(pred, gt)
        print(pred, gt, " ".join(f"{k}={v!r}" for k, v in r.items()))
