"""Label-mask algebra: component extraction, binarizers, background-preserving composite.

Pure functions over numpy arrays; safe for concurrent use. Binary masks
broadcast over the trailing color channel.
"""
from __future__ import annotations

import numpy as np

from .dataset import NUM_CLASSES, SemanticMask


def _labels(mask) -> np.ndarray:
    if isinstance(mask, SemanticMask):
        return mask.labels
    return np.asarray(mask)


def extract_component(label_id: int, image: np.ndarray, mask) -> np.ndarray:
    """Keep pixels whose mask label equals label_id, zero everything else."""
    labels = _labels(mask)
    image = np.asarray(image)
    if image.shape[:2] != labels.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {labels.shape} disagree")
    if not 0 <= label_id < NUM_CLASSES:
        raise ValueError(f"label id {label_id} outside 0..{NUM_CLASSES - 1}")
    keep = labels == label_id
    if image.ndim == 3:
        keep = keep[..., None]
    return np.where(keep, image, np.zeros((), dtype=image.dtype))


def foreground_mask(mask) -> np.ndarray:
    """1 where the mask is any facial label, 0 on background."""
    return (_labels(mask) != 0).astype(np.uint8)


def background_mask(mask) -> np.ndarray:
    """Complement of foreground_mask."""
    return (_labels(mask) == 0).astype(np.uint8)


def composite(anonymized: np.ndarray, original: np.ndarray, mask) -> np.ndarray:
    """Blend per label foreground: anonymized pixels on the face, original elsewhere.

    Background pixels are taken from `original` bit-exactly, not rescaled.
    """
    anonymized = np.asarray(anonymized)
    original = np.asarray(original)
    labels = _labels(mask)
    if anonymized.shape != original.shape or anonymized.shape[:2] != labels.shape:
        raise ValueError(
            f"shape mismatch: {anonymized.shape} vs {original.shape} vs mask {labels.shape}")
    fg = labels != 0
    if anonymized.ndim == 3:
        fg = fg[..., None]
    return np.where(fg, anonymized, original)
