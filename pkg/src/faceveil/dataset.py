"""Dataset ingestion: label reduction, face-cropped multi-resolution pairs, triple sampling.

Raw datasets on disk are photo/mask file pairs matched by filename stem:
8-bit RGB photos next to single-channel 8-bit masks whose pixel values are
label ids in the 19-class annotation space. Preparation reduces masks to the
11-label facial space, crops both to the detected face, and replicates every
pair at each configured resolution (detail degraded, canvas size fixed).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .detectors import FaceDetector

log = logging.getLogger(__name__)

# Source annotation space (CelebAMask-HQ convention), id = position.
SOURCE_CLASS_NAMES = (
    "background", "skin", "nose", "eye_g", "l_eye", "r_eye", "l_brow",
    "r_brow", "l_ear", "r_ear", "mouth", "u_lip", "l_lip", "hair", "hat",
    "ear_r", "neck_l", "neck", "cloth",
)

# Reduced space: background + 10 facial components.
CLASS_NAMES = (
    "background", "skin", "nose", "eyes", "eyebrows", "ears", "mouth",
    "lip", "hair", "neck", "eyeglass",
)
NUM_CLASSES = len(CLASS_NAMES)  # 11 channels incl. background
NUM_FACIAL_CLASSES = NUM_CLASSES - 1

# 19 -> 11 mapping. Left/right pairs merge; upper/lower lip merge; worn
# items other than eyeglasses fold into background.
CLASS_REDUCTION = {
    0: 0,   # background
    1: 1,   # skin
    2: 2,   # nose
    3: 10,  # eye_g -> eyeglass
    4: 3,   # l_eye -> eyes
    5: 3,   # r_eye -> eyes
    6: 4,   # l_brow -> eyebrows
    7: 4,   # r_brow -> eyebrows
    8: 5,   # l_ear -> ears
    9: 5,   # r_ear -> ears
    10: 6,  # mouth (inner)
    11: 7,  # u_lip -> lip
    12: 7,  # l_lip -> lip
    13: 8,  # hair
    14: 0,  # hat -> background
    15: 0,  # ear_r (earring) -> background
    16: 0,  # neck_l (necklace) -> background
    17: 9,  # neck
    18: 0,  # cloth -> background
}

_REDUCTION_LUT = np.array([CLASS_REDUCTION[i] for i in range(len(SOURCE_CLASS_NAMES))],
                          dtype=np.uint8)

PHOTO_EXTENSIONS = (".png", ".jpg", ".jpeg")


class DatasetError(Exception):
    """Raised for unusable dataset layouts or corrupt contents."""


@dataclass(frozen=True)
class SemanticMask:
    """Per-pixel facial-component label map over the reduced space."""

    labels: np.ndarray  # H x W, integer ids in {0..10}

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DatasetError(f"mask must be 2-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            bad = sorted(set(np.unique(labels)) - set(range(NUM_CLASSES)))
            raise DatasetError(f"mask contains ids outside 0..{NUM_CLASSES - 1}: {bad}")
        object.__setattr__(self, "labels", labels)

    @property
    def palette(self) -> dict[int, str]:
        return {i: name for i, name in enumerate(CLASS_NAMES)}

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class FaceSample:
    """One training pair: photo in [0,1], reduced mask, identity tag."""

    photo: np.ndarray  # H x W x 3 float in [0,1]
    mask: SemanticMask
    identity: str
    source_resolution: int

    def __post_init__(self):
        if self.photo.shape[:2] != self.mask.shape:
            raise DatasetError(
                f"photo {self.photo.shape[:2]} and mask {self.mask.shape} disagree")


@dataclass
class DatasetConfig:
    root: str = "data/raw"
    crop_enabled: bool = True
    resolution_set: tuple[int, ...] = (256,)
    split_seed: int = 0
    holdout_fraction: float = 0.05
    image_size: int = 256  # canvas size every emitted pair is resized to

    def __post_init__(self):
        if not self.resolution_set:
            raise DatasetError("resolution_set must be non-empty")
        if any(s < 32 for s in self.resolution_set):
            raise DatasetError("all resolutions must be >= 32")


@dataclass
class PrepareStats:
    usable_stems: int = 0
    missing_pair: list[str] = field(default_factory=list)
    corrupt: list[str] = field(default_factory=list)
    no_face: list[str] = field(default_factory=list)
    emitted: list[str] = field(default_factory=list)  # source stem per sample


def reduce_classes(mask19: np.ndarray) -> SemanticMask:
    """Map a 19-class annotation mask onto the reduced 11-label space."""
    mask19 = np.asarray(mask19)
    unknown = np.unique(mask19[(mask19 < 0) | (mask19 >= len(SOURCE_CLASS_NAMES))])
    if unknown.size:
        raise DatasetError(f"unknown source label ids: {sorted(int(v) for v in unknown)}")
    return SemanticMask(_REDUCTION_LUT[mask19.astype(np.int64)])


def identity_from_stem(stem: str) -> str:
    """Identity tag convention: stem prefix before the first underscore."""
    return stem.split("_", 1)[0]


def load_photo(path: Path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_photo(path: Path, photo: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(photo) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_mask_file(path: Path) -> np.ndarray:
    """Read a single-channel label image without palette expansion."""
    img = Image.open(path)
    if img.mode not in ("L", "P", "I", "I;16"):
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DatasetError(f"{path.name}: mask is not single-channel")
    return arr.astype(np.int64)


def save_mask(path: Path, labels: np.ndarray) -> None:
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path)


def resize_photo(photo: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (height, width)."""
    out = cv2.resize(photo, (size[1], size[0]), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0)


def resize_mask(labels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize; label maps must never interpolate."""
    return cv2.resize(labels.astype(np.uint8), (size[1], size[0]),
                      interpolation=cv2.INTER_NEAREST).astype(np.int64)


def degrade_photo(photo: np.ndarray, resolution: int, size: int) -> np.ndarray:
    """Downscale to resolution x resolution then back up to the canvas size.

    Emulates small detected faces: detail is lost, canvas size is kept.
    """
    if resolution == size:
        return resize_photo(photo, (size, size))
    low = resize_photo(photo, (resolution, resolution))
    return resize_photo(low, (size, size))


def _index_stems(root: Path) -> tuple[dict[str, Path], dict[str, Path]]:
    photos, masks = {}, {}
    photo_dir, mask_dir = root / "photos", root / "masks"
    if not photo_dir.is_dir() or not mask_dir.is_dir():
        raise DatasetError(
            f"expected layout {root}/photos/*.png (RGB) and {root}/masks/*.png "
            "(single-channel label ids), paired by filename stem")
    for p in sorted(photo_dir.iterdir()):
        if p.suffix.lower() in PHOTO_EXTENSIONS:
            photos[p.stem] = p
    for p in sorted(mask_dir.iterdir()):
        if p.suffix.lower() == ".png":
            masks[p.stem] = p
    return photos, masks


def prepare_pairs(config: DatasetConfig,
                  detector: FaceDetector) -> tuple[list[FaceSample], PrepareStats]:
    """Build face-cropped multi-resolution training pairs from a raw dataset.

    Per usable stem: reduce the mask, crop photo and mask identically to the
    top face detection (full image when nothing is detected), then emit one
    pair per configured resolution. Output order is deterministic: sorted
    stems, resolutions in configured order.
    """
    root = Path(config.root)
    photos, masks = _index_stems(root)
    stats = PrepareStats()
    samples: list[FaceSample] = []

    for stem in sorted(set(photos) | set(masks)):
        if stem not in photos or stem not in masks:
            stats.missing_pair.append(stem)
            log.warning("skipping %s: photo/mask pair incomplete", stem)
            continue
        try:
            photo = load_photo(photos[stem])
            mask19 = load_mask_file(masks[stem])
            if photo.shape[:2] != mask19.shape:
                raise DatasetError("photo/mask dimensions disagree")
            reduced = reduce_classes(mask19)
        except (DatasetError, OSError) as exc:
            stats.corrupt.append(stem)
            log.warning("skipping %s: %s", stem, exc)
            continue

        labels = reduced.labels
        if config.crop_enabled:
            boxes = detector.detect(photo)
            if boxes:
                b = boxes[0]
                photo = photo[b.y0:b.y1, b.x0:b.x1]
                labels = labels[b.y0:b.y1, b.x0:b.x1]
            else:
                stats.no_face.append(stem)

        size = config.image_size
        labels_out = resize_mask(labels, (size, size))
        identity = identity_from_stem(stem)
        for res in config.resolution_set:
            samples.append(FaceSample(
                photo=degrade_photo(photo, res, size),
                mask=SemanticMask(labels_out),
                identity=identity,
                source_resolution=res,
            ))
            stats.emitted.append(stem)
        stats.usable_stems += 1

    return samples, stats


def split_stems(stems: list[str], seed: int, holdout_fraction: float) -> tuple[list[str], list[str]]:
    """Deterministic train/test split over stems."""
    rng = np.random.default_rng(seed)
    order = sorted(stems)
    rng.shuffle(order)
    n_hold = int(round(len(order) * holdout_fraction))
    held = sorted(order[:n_hold])
    train = sorted(order[n_hold:])
    return train, held


class TrainingDataset:
    """Immutable in-memory collection of prepared samples with triple sampling."""

    def __init__(self, samples: list[FaceSample]):
        if not samples:
            raise DatasetError("empty dataset")
        self._samples = list(samples)
        self._identities = [s.identity for s in self._samples]

    def __len__(self) -> int:
        return len(self._samples)

    def __getitem__(self, i: int) -> FaceSample:
        return self._samples[i]

    @property
    def identities(self) -> list[str]:
        return list(self._identities)

    def num_identities(self) -> int:
        return len(set(self._identities))

    def draw_reference_index(self, rng: np.random.Generator, index: int) -> int:
        """Index of a reference photo for sample `index`.

        Uniform over samples of a different identity when at least two
        identities exist, otherwise uniform over other samples.
        """
        if len(self._samples) < 2:
            raise DatasetError("cannot draw a reference from a single-sample dataset")
        own = self._identities[index]
        pool = [i for i, ident in enumerate(self._identities) if ident != own]
        if not pool:
            pool = [i for i in range(len(self._samples)) if i != index]
        return int(pool[rng.integers(len(pool))])


def sample_triple(rng: np.random.Generator, dataset: TrainingDataset,
                  index: int | None = None) -> tuple[np.ndarray, SemanticMask, np.ndarray]:
    """Draw (photo, mask, reference photo) with the reference never equal to the photo."""
    if index is None:
        index = int(rng.integers(len(dataset)))
    ref = dataset.draw_reference_index(rng, index)
    sample = dataset[index]
    return sample.photo, sample.mask, dataset[ref].photo


# Prepared-dataset disk layout: <dir>/photos/<stem>__r<res>.png,
# <dir>/masks/<stem>__r<res>.png plus manifest lines "stem res identity".

def write_prepared(out_dir: Path, samples: list[FaceSample],
                   stems_per_sample: list[str]) -> None:
    out_dir = Path(out_dir)
    (out_dir / "photos").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for sample, stem in zip(samples, stems_per_sample):
        name = f"{stem}__r{sample.source_resolution}"
        save_photo(out_dir / "photos" / f"{name}.png", sample.photo)
        save_mask(out_dir / "masks" / f"{name}.png", sample.mask.labels)
        lines.append(f"{name} {sample.source_resolution} {sample.identity}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_prepared(prepared_dir: Path) -> TrainingDataset:
    prepared_dir = Path(prepared_dir)
    manifest = prepared_dir / "manifest.txt"
    if not manifest.is_file():
        raise DatasetError(f"missing manifest: {manifest}")
    samples = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, res, identity = line.split()
        photo = load_photo(prepared_dir / "photos" / f"{name}.png")
        labels = load_mask_file(prepared_dir / "masks" / f"{name}.png")
        if labels.max(initial=0) >= NUM_CLASSES:
            raise DatasetError(f"{name}: prepared mask has ids outside the reduced space")
        samples.append(FaceSample(photo, SemanticMask(labels), identity, int(res)))
    return TrainingDataset(samples)
