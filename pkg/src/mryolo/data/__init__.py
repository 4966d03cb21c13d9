from .cifar import CIFAR10_CLASSES, load_cifar, load_cifar_file, synth_cifar
from .datasets import (
    DETECTION_CLASSES,
    Dataset,
    Sample,
    load_dataset_dir,
    load_voc_xml,
    load_yolo_dataset,
    read_manifest,
    read_yolo_labels,
    write_manifest,
    write_yolo_labels,
)
from .images import read_image, read_ppm, resize_bilinear, resize_nearest, write_image, write_ppm
from .phantom import make_phantom, synth_phantom
from .transforms import LetterboxTransform, hflip, letterbox, mosaic

__all__ = [
    "CIFAR10_CLASSES",
    "DETECTION_CLASSES",
    "Dataset",
    "LetterboxTransform",
    "Sample",
    "hflip",
    "letterbox",
    "load_cifar",
    "load_cifar_file",
    "load_dataset_dir",
    "load_voc_xml",
    "load_yolo_dataset",
    "make_phantom",
    "mosaic",
    "read_image",
    "read_manifest",
    "read_ppm",
    "read_yolo_labels",
    "resize_bilinear",
    "resize_nearest",
    "synth_cifar",
    "synth_phantom",
    "write_image",
    "write_manifest",
    "write_ppm",
    "write_yolo_labels",
]
