"""CIFAR-format binary classification data.

The standard layout is one label byte followed by 3072 pixel bytes (three
32x32 planes, R then G then B) per record. `synth_cifar` writes the same
format with generated 10-class pattern images, for environments without the
real corpus; the loader treats both identically.
"""

from __future__ import annotations

import os

import numpy as np

RECORD = 3073
CIFAR10_CLASSES = [
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
]


def load_cifar_file(path):
    size = os.path.getsize(path)
    if size == 0 or size % RECORD != 0:
        raise ValueError(f"{path}: size {size} is not a multiple of {RECORD} (truncated?)")
    raw = np.fromfile(path, dtype=np.uint8).reshape(-1, RECORD)
    labels = raw[:, 0].astype(np.int64)
    images = raw[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return images, labels


def load_cifar(paths):
    parts = [load_cifar_file(p) for p in paths]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def find_cifar_dir(root):
    """Returns (train_files, test_files) under a cifar-10 binary directory."""
    train = sorted(
        os.path.join(root, f) for f in os.listdir(root) if f.startswith("data_batch")
    )
    test = [os.path.join(root, "test_batch.bin")]
    test = [p for p in test if os.path.exists(p)]
    if not train:
        raise FileNotFoundError(f"no data_batch*.bin files under {root}")
    return train, test


# --- synthetic stand-in -------------------------------------------------------


def _pattern(class_id, rng):
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    phase = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(3.0, 5.0)
    cx, cy = rng.uniform(0.3, 0.7, size=2)
    r = np.hypot(xx - cx, yy - cy)
    size = rng.uniform(0.18, 0.3)
    if class_id == 0:
        m = np.sin(2 * np.pi * freq * yy + phase) > 0
    elif class_id == 1:
        m = np.sin(2 * np.pi * freq * xx + phase) > 0
    elif class_id == 2:
        m = np.sin(2 * np.pi * freq * (xx + yy) / np.sqrt(2) + phase) > 0
    elif class_id == 3:
        m = (np.sin(2 * np.pi * freq * xx + phase) * np.sin(2 * np.pi * freq * yy + phase)) > 0
    elif class_id == 4:
        m = r < size
    elif class_id == 5:
        m = (r > size * 0.6) & (r < size)
    elif class_id == 6:
        m = (np.abs(xx - cx) < size * 0.8) & (np.abs(yy - cy) < size * 0.8)
    elif class_id == 7:
        m = (np.abs(xx - cx) < size * 0.25) | (np.abs(yy - cy) < size * 0.25)
    elif class_id == 8:
        m = (yy - cy) > np.abs(xx - cx) * rng.uniform(0.8, 1.4) - size
        m &= (yy - cy) < size
    else:
        m = rng.random((32, 32)) < 0.18
    return m


def synth_cifar_record(seed, index, num_classes=10):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    label = index % num_classes
    fg = rng.uniform(0.55, 1.0, size=3)
    bg = rng.uniform(0.0, 0.45, size=3)
    mask = _pattern(label, rng)
    img = np.empty((3, 32, 32), dtype=np.float32)
    for ch in range(3):
        img[ch] = np.where(mask, fg[ch], bg[ch])
    img += rng.normal(0.0, 0.12, size=img.shape)
    return np.clip(img, 0.0, 1.0), label


def synth_cifar(path, n, seed=0, num_classes=10):
    """Write n synthetic records in CIFAR binary layout (balanced classes)."""
    with open(path, "wb") as f:
        for i in range(n):
            img, label = synth_cifar_record(seed, i, num_classes)
            rec = np.empty(RECORD, dtype=np.uint8)
            rec[0] = label
            rec[1:] = (img * 255.0 + 0.5).astype(np.uint8).reshape(-1)
            f.write(rec.tobytes())
    return path
