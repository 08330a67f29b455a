"""Frame anonymization: detect faces, tighten crops by repeated detection,
replace each face with a synthesized one, keep everything else bit-exact.

Frames are HxWx3 float arrays in [0,1]. Processing is stateless given loaded
models, so frames are independent; no temporal coupling.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .dataset import resize_photo
from .detectors import DetectionBox, FaceDetector
from .mask_algebra import composite
from .networks import ModelBundle, segment, synthesize, to_image, to_tensor

log = logging.getLogger(__name__)


class MediaError(Exception):
    """Raised for unreadable or unwritable image/video targets."""


class NoFaceError(Exception):
    """Raised when refinement is asked to run on a crop with no detection."""


@dataclass
class AnonymizerConfig:
    r_thr: float = 0.6
    max_refine_iters: int = 4
    detector: str = "skin"
    checkpoint: str = ""

    def __post_init__(self):
        if not 0.0 < self.r_thr <= 1.0:
            raise ValueError("r_thr must be in (0,1]")
        if self.max_refine_iters < 1:
            raise ValueError("max_refine_iters must be >= 1")


@dataclass
class RefinedFace:
    crop: np.ndarray
    region: tuple[int, int, int, int]  # x0,y0,x1,y1 of crop within the input image
    box: DetectionBox                  # detection within crop
    ratios: list[float]                # face/crop area ratio per accepted iteration
    met_threshold: bool
    face_lost: bool


@dataclass
class FrameStats:
    faces_detected: int = 0
    faces_anonymized: int = 0
    faces_skipped: int = 0     # refinement found nothing inside the box
    faces_unmodified: int = 0  # segmentation produced an empty foreground


@dataclass
class VideoSummary:
    frames: int = 0
    width: int = 0
    height: int = 0
    fps: float = 0.0
    faces_per_frame: dict[int, int] = field(default_factory=dict)
    frame_seconds: list[float] = field(default_factory=list)
    copied_through: int = 0
    faces_anonymized: int = 0
    faces_skipped: int = 0
    faces_unmodified: int = 0

    def timing_percentiles(self) -> dict[str, float]:
        if not self.frame_seconds:
            return {"p50": 0.0, "p90": 0.0, "p99": 0.0}
        arr = np.asarray(self.frame_seconds)
        return {f"p{q}": float(np.percentile(arr, q)) for q in (50, 90, 99)}

    def to_text(self) -> str:
        lines = [
            f"frames: {self.frames}",
            f"resolution: {self.width}x{self.height}",
            f"fps: {self.fps:g}",
            f"faces_anonymized: {self.faces_anonymized}",
            f"faces_skipped: {self.faces_skipped}",
            f"faces_unmodified: {self.faces_unmodified}",
            f"copied_through: {self.copied_through}",
            "faces_per_frame_histogram:",
        ]
        for n in sorted(self.faces_per_frame):
            lines.append(f"  {n} faces: {self.faces_per_frame[n]} frames")
        pct = self.timing_percentiles()
        lines.append("frame_time_seconds: "
                     + " ".join(f"{k}={v:.4f}" for k, v in pct.items()))
        return "\n".join(lines) + "\n"


def refine_detection(crop: np.ndarray, detector: FaceDetector, r_thr: float,
                     max_iters: int) -> RefinedFace:
    """Re-detect inside successively tighter crops until the face dominates.

    The reported ratio sequence is monotone non-decreasing: an iteration that
    fails to improve the ratio ends refinement at the best crop so far. If
    the detector loses the face, the last crop that held a detection is
    returned with the lost flag set.
    """
    boxes = detector.detect(crop)
    if not boxes:
        raise NoFaceError("refinement expects a crop with at least one detection")
    h, w = crop.shape[:2]
    region = (0, 0, w, h)
    current = crop
    box = boxes[0]
    ratios = [box.area_ratio]
    lost = False
    iters = 0
    while ratios[-1] < r_thr and iters < max_iters:
        iters += 1
        nxt_region = (region[0] + box.x0, region[1] + box.y0,
                      region[0] + box.x1, region[1] + box.y1)
        nxt = crop[nxt_region[1]:nxt_region[3], nxt_region[0]:nxt_region[2]]
        nxt_boxes = detector.detect(nxt)
        if not nxt_boxes:
            lost = True
            break
        nxt_box = nxt_boxes[0]
        if nxt_box.area_ratio <= ratios[-1]:
            break  # best so far; keeps the sequence monotone
        region, current, box = nxt_region, nxt, nxt_box
        ratios.append(nxt_box.area_ratio)
    met = ratios[-1] >= r_thr and not lost
    return RefinedFace(current, region, box, ratios, met, lost)


def anonymize_frame(frame: np.ndarray, bundle: ModelBundle, detector: FaceDetector,
                    cfg: AnonymizerConfig) -> tuple[np.ndarray, FrameStats]:
    """Replace every detected face region; leave all other pixels untouched."""
    frame = np.asarray(frame, dtype=np.float32)
    boxes = detector.detect(frame)
    stats = FrameStats(faces_detected=len(boxes))
    out = frame.copy()
    if not boxes:
        return out, stats
    size = bundle.image_size
    for box in boxes:  # descending confidence; later pastes win on overlap
        crop0 = frame[box.y0:box.y1, box.x0:box.x1]
        try:
            refined = refine_detection(crop0, detector, cfg.r_thr, cfg.max_refine_iters)
        except NoFaceError:
            stats.faces_skipped += 1
            continue
        face = refined.crop
        if min(face.shape[:2]) < 4:
            stats.faces_skipped += 1
            continue
        net_in = resize_photo(face, (size, size))
        _, labels = segment(bundle, to_tensor(net_in))
        labels_np = labels[0].cpu().numpy()
        if not labels_np.any():
            stats.faces_unmodified += 1
            continue
        synth = to_image(synthesize(bundle, labels_np))
        blended = composite(synth, net_in, labels_np)
        back = resize_photo(blended, face.shape[:2])
        x0 = box.x0 + refined.region[0]
        y0 = box.y0 + refined.region[1]
        out[y0:y0 + back.shape[0], x0:x0 + back.shape[1]] = back
        stats.faces_anonymized += 1
    return out, stats


def anonymize_frames(frames, bundle: ModelBundle, detector: FaceDetector,
                     cfg: AnonymizerConfig, summary: VideoSummary):
    """Generator over anonymized frames; accumulates the summary in place.

    A frame whose processing raises is copied through unchanged and counted.
    """
    for frame in frames:
        start = time.perf_counter()
        try:
            out, stats = anonymize_frame(frame, bundle, detector, cfg)
            summary.faces_per_frame[stats.faces_detected] = \
                summary.faces_per_frame.get(stats.faces_detected, 0) + 1
            summary.faces_anonymized += stats.faces_anonymized
            summary.faces_skipped += stats.faces_skipped
            summary.faces_unmodified += stats.faces_unmodified
        except Exception:  # noqa: BLE001 -- corrupt frame must not kill the stream
            log.exception("frame %d failed; copying through", summary.frames)
            out = np.asarray(frame, dtype=np.float32).copy()
            summary.copied_through += 1
        summary.frame_seconds.append(time.perf_counter() - start)
        summary.frames += 1
        summary.height, summary.width = out.shape[:2]
        yield out


def anonymize_video(in_path: Path, out_path: Path, bundle: ModelBundle,
                    detector: FaceDetector, cfg: AnonymizerConfig) -> VideoSummary:
    """File-to-file video anonymization preserving frame count, size and rate."""
    in_path, out_path = Path(in_path), Path(out_path)
    cap = cv2.VideoCapture(str(in_path))
    if not cap.isOpened():
        raise MediaError(f"cannot decode video: {in_path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 25.0
    width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
    height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
    fourcc = cv2.VideoWriter_fourcc(*("mp4v" if out_path.suffix.lower() == ".mp4"
                                      else "MJPG"))
    writer = cv2.VideoWriter(str(out_path), fourcc, fps, (width, height))
    if not writer.isOpened():
        cap.release()
        raise MediaError(f"cannot open video writer for {out_path}")

    def frames():
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            yield bgr[:, :, ::-1].astype(np.float32) / 255.0

    summary = VideoSummary(fps=float(fps), width=width, height=height)
    try:
        for out in anonymize_frames(frames(), bundle, detector, cfg, summary):
            arr = np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)
            writer.write(arr[:, :, ::-1])
    finally:
        cap.release()
        writer.release()
    return summary
