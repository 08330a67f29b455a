"""Pluggable face detection.

Any detector maps an RGB image in [0,1] to boxes sorted by descending
confidence, deterministically. The built-in detectors are lightweight
stand-ins: a skin-chroma blob detector for natural images and a marker
color detector for synthetic material.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import cv2
import numpy as np


@dataclass(frozen=True)
class DetectionBox:
    """Face bounding box in pixel coordinates, half-open [x0,x1) x [y0,y1)."""

    x0: int
    y0: int
    x1: int
    y1: int
    confidence: float
    area_ratio: float  # box area / area of the image it was detected in

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")
        if not 0.0 < self.area_ratio <= 1.0:
            raise ValueError(f"area_ratio {self.area_ratio} outside (0,1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height


class FaceDetector(ABC):
    """Detector interface; implementations must be deterministic."""

    @abstractmethod
    def detect(self, image: np.ndarray) -> list[DetectionBox]:
        """Return boxes sorted by descending confidence."""


def _boxes_from_binary(binary: np.ndarray, image_shape: tuple[int, int],
                       min_area_frac: float, context_margin: float) -> list[DetectionBox]:
    """Connected components of a binary mask -> detection boxes.

    context_margin widens each box by that fraction of the image side on
    every edge, imitating the loose boxes real detectors produce.
    """
    h, w = image_shape
    n, _, stats, _ = cv2.connectedComponentsWithStats(binary.astype(np.uint8), connectivity=8)
    boxes = []
    img_area = float(h * w)
    pad_y = int(round(context_margin * h))
    pad_x = int(round(context_margin * w))
    for i in range(1, n):
        x, y, bw, bh, area = stats[i]
        if area / img_area < min_area_frac:
            continue
        x0 = max(0, x - pad_x)
        y0 = max(0, y - pad_y)
        x1 = min(w, x + bw + pad_x)
        y1 = min(h, y + bh + pad_y)
        box_area = (x1 - x0) * (y1 - y0)
        # fill fraction of the tight component inside its padded box
        confidence = float(min(1.0, area / max(1, bw * bh)))
        boxes.append(DetectionBox(int(x0), int(y0), int(x1), int(y1),
                                  confidence, box_area / img_area))
    boxes.sort(key=lambda b: (-b.confidence, -b.area, b.x0, b.y0))
    return boxes


class SkinBlobDetector(FaceDetector):
    """Reference detector: skin-chroma thresholding plus connected components.

    Works on frontal faces against non-skin backgrounds; accuracy is not the
    point, being deterministic and dependency-free is.
    """

    def __init__(self, min_area_frac: float = 0.002, context_margin: float = 0.02):
        self.min_area_frac = min_area_frac
        self.context_margin = context_margin

    def detect(self, image: np.ndarray) -> list[DetectionBox]:
        img = np.asarray(image, dtype=np.float32)
        r, g, b = img[..., 0], img[..., 1], img[..., 2]
        total = r + g + b + 1e-6
        rn, gn = r / total, g / total
        skin = (
            (r > 0.25) & (rn > 0.36) & (rn < 0.56) & (gn > 0.26) & (gn < 0.37)
            & (r > b) & (r >= g)
        )
        if not skin.any():
            return []
        binary = cv2.morphologyEx(skin.astype(np.uint8), cv2.MORPH_CLOSE,
                                  np.ones((5, 5), np.uint8))
        return _boxes_from_binary(binary, img.shape[:2],
                                  self.min_area_frac, self.context_margin)


class ColorBlobDetector(FaceDetector):
    """Detects regions of a fixed marker color; for synthetic fixtures."""

    def __init__(self, color: tuple[float, float, float], tolerance: float = 0.08,
                 min_area_frac: float = 0.0005, context_margin: float = 0.0):
        self.color = np.asarray(color, dtype=np.float32)
        self.tolerance = tolerance
        self.min_area_frac = min_area_frac
        self.context_margin = context_margin

    def detect(self, image: np.ndarray) -> list[DetectionBox]:
        img = np.asarray(image, dtype=np.float32)
        match = np.all(np.abs(img - self.color) <= self.tolerance, axis=-1)
        if not match.any():
            return []
        return _boxes_from_binary(match.astype(np.uint8), img.shape[:2],
                                  self.min_area_frac, self.context_margin)


DETECTORS = {
    "skin": SkinBlobDetector,
    "blob": ColorBlobDetector,
}


def build_detector(name: str, **kwargs) -> FaceDetector:
    if name not in DETECTORS:
        raise ValueError(f"unknown detector {name!r}; choose from {sorted(DETECTORS)}")
    if name == "blob" and "color" not in kwargs:
        kwargs["color"] = (1.0, 0.0, 0.0)
    return DETECTORS[name](**kwargs)
