"""Datasets: samples, annotation loaders, and on-disk layout.

A Sample couples a (3,H,W) [0,1] image with normalized xyxy ground-truth
boxes. Loaders validate aggressively and report the offending file and line;
they never emit an invalid Sample.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .images import read_image

DETECTION_CLASSES = ["LV", "LA", "RV", "RA"]


@dataclass
class Sample:
    image: np.ndarray  # (3,H,W) float32 in [0,1]
    gts: list  # [(class_id, (x1,y1,x2,y2) normalized)]
    path: str = ""

    def validate(self, num_classes):
        for class_id, box in self.gts:
            x1, y1, x2, y2 = box
            if not (0 <= class_id < num_classes):
                raise ValueError(f"{self.path}: class id {class_id} out of range")
            if not (0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0):
                raise ValueError(f"{self.path}: box {box} outside [0,1] or degenerate")
        return self


@dataclass
class Dataset:
    samples: list
    class_names: list = field(default_factory=lambda: list(DETECTION_CLASSES))

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def split(self, val_fraction, seed=0):
        """Deterministic shuffled split into (train, val)."""
        order = np.random.default_rng(seed).permutation(len(self.samples))
        n_val = int(round(len(self.samples) * val_fraction))
        val_idx = set(order[:n_val].tolist())
        train = [s for i, s in enumerate(self.samples) if i not in val_idx]
        val = [s for i, s in enumerate(self.samples) if i in val_idx]
        return Dataset(train, self.class_names), Dataset(val, self.class_names)


def parse_yolo_label_line(line, path, lineno, num_classes):
    parts = line.split()
    if len(parts) != 5:
        raise ValueError(f"{path}:{lineno}: expected 'class cx cy w h', got {line!r}")
    try:
        class_id = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise ValueError(f"{path}:{lineno}: unparsable field ({exc})") from None
    if not 0 <= class_id < num_classes:
        raise ValueError(f"{path}:{lineno}: unknown class id {class_id}")
    if w <= 0 or h <= 0:
        raise ValueError(f"{path}:{lineno}: zero-area box")
    box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    if not all(0.0 <= v <= 1.0 for v in box):
        raise ValueError(f"{path}:{lineno}: box {box} outside [0,1]")
    return class_id, box


def read_yolo_labels(path, num_classes):
    gts = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            gts.append(parse_yolo_label_line(line, path, lineno, num_classes))
    return gts


def write_yolo_labels(path, gts):
    with open(path, "w") as f:
        for class_id, (x1, y1, x2, y2) in gts:
            cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
            f.write(f"{class_id} {cx:.8f} {cy:.8f} {x2 - x1:.8f} {y2 - y1:.8f}\n")


def load_yolo_dataset(image_dir, label_dir=None, classes=None):
    """One label file per image (same stem, .txt); empty files mean no boxes."""
    classes = list(classes) if classes else list(DETECTION_CLASSES)
    label_dir = label_dir or os.path.join(os.path.dirname(image_dir.rstrip("/")), "labels")
    names = sorted(
        f for f in os.listdir(image_dir) if f.rsplit(".", 1)[-1] in ("ppm", "png", "jpg")
    )
    if not names:
        raise FileNotFoundError(f"no images found in {image_dir}")
    samples = []
    for name in names:
        img_path = os.path.join(image_dir, name)
        lbl_path = os.path.join(label_dir, name.rsplit(".", 1)[0] + ".txt")
        gts = read_yolo_labels(lbl_path, len(classes)) if os.path.exists(lbl_path) else []
        samples.append(Sample(read_image(img_path), gts, path=img_path).validate(len(classes)))
    return Dataset(samples, classes)


def load_dataset_dir(root, classes=None):
    """Standard layout: <root>/images, <root>/labels, optional classes.txt."""
    classes_file = os.path.join(root, "classes.txt")
    if classes is None and os.path.exists(classes_file):
        with open(classes_file) as f:
            classes = [line.strip() for line in f if line.strip()]
    return load_yolo_dataset(os.path.join(root, "images"), os.path.join(root, "labels"), classes)


def load_voc_xml(xml_dir, image_dir, classes):
    """PASCAL-style annotations: object/name/bndbox in pixel coordinates."""
    classes = list(classes)
    samples = []
    for name in sorted(f for f in os.listdir(xml_dir) if f.endswith(".xml")):
        path = os.path.join(xml_dir, name)
        root = ET.parse(path).getroot()
        img_name = root.findtext("filename") or name[:-4] + ".ppm"
        image = read_image(os.path.join(image_dir, img_name))
        h, w = image.shape[1], image.shape[2]
        gts = []
        for obj in root.iter("object"):
            cls_name = obj.findtext("name")
            if cls_name not in classes:
                raise ValueError(f"{path}: unknown class {cls_name!r}")
            bb = obj.find("bndbox")
            x1 = float(bb.findtext("xmin"))
            y1 = float(bb.findtext("ymin"))
            x2 = float(bb.findtext("xmax"))
            y2 = float(bb.findtext("ymax"))
            if x2 <= x1 or y2 <= y1:
                raise ValueError(f"{path}: degenerate box ({x1},{y1},{x2},{y2})")
            gts.append(
                (
                    classes.index(cls_name),
                    (
                        max(x1 / w, 0.0),
                        max(y1 / h, 0.0),
                        min(x2 / w, 1.0),
                        min(y2 / h, 1.0),
                    ),
                )
            )
        samples.append(Sample(image, gts, path=path).validate(len(classes)))
    return Dataset(samples, classes)


def write_manifest(path, image_paths):
    with open(path, "w") as f:
        for p in image_paths:
            f.write(f"{p}\n")


def read_manifest(path):
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]
