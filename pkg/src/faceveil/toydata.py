"""Procedural toy face dataset: deterministic cartoon faces with 19-class
annotation masks, multiple samples per identity.

Useful for demos, integration tests, and desk-scale training where the real
high-resolution corpora are unavailable. Identity controls geometry and
palette; per-sample jitter varies pose, lighting and accessories slightly.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import cv2
import numpy as np

from .dataset import save_mask, save_photo

# source-space label ids used by the renderer
_L = {"skin": 1, "nose": 2, "eye_g": 3, "l_eye": 4, "r_eye": 5, "l_brow": 6,
      "r_brow": 7, "l_ear": 8, "r_ear": 9, "mouth": 10, "u_lip": 11,
      "l_lip": 12, "hair": 13, "hat": 14, "ear_r": 15, "neck": 17, "cloth": 18}


def _identity_params(identity_rng: np.random.Generator) -> dict:
    r = identity_rng.uniform(0.74, 0.93)
    skin = np.array([r, r * identity_rng.uniform(0.68, 0.76),
                     r * identity_rng.uniform(0.5, 0.6)])
    hair = identity_rng.uniform(0.05, 0.5, size=3) * np.array([1.0, 0.8, 0.6])
    return {
        "skin": skin,
        "hair": hair,
        "lip": np.array([identity_rng.uniform(0.55, 0.8), 0.25, 0.3]),
        "iris": identity_rng.uniform(0.1, 0.6, size=3),
        "cloth": identity_rng.uniform(0.1, 0.9, size=3),
        "face_aspect": identity_rng.uniform(1.15, 1.45),
        "face_scale": identity_rng.uniform(0.26, 0.34),
        "eye_dx": identity_rng.uniform(0.38, 0.5),
        "eye_size": identity_rng.uniform(0.10, 0.16),
        "nose_size": identity_rng.uniform(0.10, 0.18),
        "mouth_w": identity_rng.uniform(0.35, 0.55),
        "brow_tilt": identity_rng.uniform(-8, 8),
        "has_glasses": identity_rng.random() < 0.25,
        "has_hat": identity_rng.random() < 0.2,
        "has_earring": identity_rng.random() < 0.2,
    }


def _ellipse(photo, mask19, center, axes, angle, color, label):
    center = (int(round(center[0])), int(round(center[1])))
    axes = (max(1, int(round(axes[0]))), max(1, int(round(axes[1]))))
    cv2.ellipse(photo, center, axes, angle, 0, 360, color.tolist(), -1)
    cv2.ellipse(mask19, center, axes, angle, 0, 360, int(label), -1)


def render_face(size: int, params: dict, sample_rng: np.random.Generator
                ) -> tuple[np.ndarray, np.ndarray]:
    """One face image plus its 19-class annotation mask."""
    photo = np.zeros((size, size, 3), dtype=np.float32)
    # cool-toned background gradient keeps the backdrop out of skin chroma
    grad = np.linspace(0.25, 0.45, size, dtype=np.float32)[:, None]
    photo[..., 0] = grad * 0.6
    photo[..., 1] = grad * 0.8
    photo[..., 2] = grad * 1.1
    mask19 = np.zeros((size, size), dtype=np.uint8)

    cx = size / 2 + sample_rng.uniform(-0.04, 0.04) * size
    cy = size * 0.42 + sample_rng.uniform(-0.03, 0.03) * size
    scale = params["face_scale"] * sample_rng.uniform(0.92, 1.08)
    fw = scale * size
    fh = fw * params["face_aspect"]
    skin = np.clip(params["skin"] * sample_rng.uniform(0.96, 1.04), 0, 1)

    # layered back to front: cloth, neck, hair, head, features
    cloth_top = min(size - 2, int(cy + fh * 1.25))
    photo[cloth_top:, :] = params["cloth"]
    mask19[cloth_top:, :] = _L["cloth"]
    neck_w = fw * 0.45
    cv2.rectangle(photo, (int(cx - neck_w), int(cy + fh * 0.8)),
                  (int(cx + neck_w), cloth_top), (skin * 0.92).tolist(), -1)
    cv2.rectangle(mask19, (int(cx - neck_w), int(cy + fh * 0.8)),
                  (int(cx + neck_w), cloth_top), _L["neck"], -1)
    _ellipse(photo, mask19, (cx, cy - fh * 0.25), (fw * 1.18, fh * 0.95), 0,
             params["hair"], _L["hair"])
    for side, lab_ear in ((-1, _L["l_ear"]), (1, _L["r_ear"])):
        _ellipse(photo, mask19, (cx + side * fw * 1.02, cy), (fw * 0.14, fh * 0.2),
                 0, skin * 0.95, lab_ear)
    _ellipse(photo, mask19, (cx, cy), (fw, fh), 0, skin, _L["skin"])

    eye_y = cy - fh * 0.15
    eye_dx = params["eye_dx"] * fw
    eye_r = params["eye_size"] * fw * 2
    for side, lab_eye, lab_brow in ((-1, _L["l_eye"], _L["l_brow"]),
                                    (1, _L["r_eye"], _L["r_brow"])):
        ex = cx + side * eye_dx
        _ellipse(photo, mask19, (ex, eye_y - eye_r * 1.6), (eye_r * 1.1, eye_r * 0.35),
                 params["brow_tilt"] * side, params["hair"] * 0.8, lab_brow)
        _ellipse(photo, mask19, (ex, eye_y), (eye_r, eye_r * 0.6), 0,
                 np.array([0.95, 0.95, 0.95]), lab_eye)
        cv2.circle(photo, (int(ex), int(eye_y)), max(1, int(eye_r * 0.35)),
                   params["iris"].tolist(), -1)
    _ellipse(photo, mask19, (cx, cy + fh * 0.12),
             (params["nose_size"] * fw, params["nose_size"] * fw * 1.4), 0,
             skin * 0.9, _L["nose"])
    mouth_y = cy + fh * 0.45
    mouth_w = params["mouth_w"] * fw
    _ellipse(photo, mask19, (cx, mouth_y - fw * 0.05), (mouth_w, fw * 0.07), 0,
             params["lip"], _L["u_lip"])
    _ellipse(photo, mask19, (cx, mouth_y + fw * 0.07), (mouth_w * 0.9, fw * 0.08), 0,
             params["lip"] * 0.9, _L["l_lip"])
    _ellipse(photo, mask19, (cx, mouth_y + fw * 0.01), (mouth_w * 0.7, fw * 0.04), 0,
             np.array([0.3, 0.08, 0.1]), _L["mouth"])

    if params["has_glasses"]:
        for side in (-1, 1):
            ex = cx + side * eye_dx
            center = (int(ex), int(eye_y))
            axes = (max(2, int(eye_r * 1.5)), max(2, int(eye_r * 1.1)))
            cv2.ellipse(photo, center, axes, 0, 0, 360, (0.1, 0.1, 0.12), 2)
            cv2.ellipse(mask19, center, axes, 0, 0, 360, _L["eye_g"], 2)
    if params["has_hat"]:
        cv2.rectangle(photo, (int(cx - fw * 1.1), 0),
                      (int(cx + fw * 1.1), int(cy - fh * 0.75)), (0.2, 0.4, 0.2), -1)
        cv2.rectangle(mask19, (int(cx - fw * 1.1), 0),
                      (int(cx + fw * 1.1), int(cy - fh * 0.75)), _L["hat"], -1)
    if params["has_earring"]:
        cv2.circle(photo, (int(cx - fw * 1.02), int(cy + fh * 0.22)), 2,
                   (0.95, 0.9, 0.3), -1)
        cv2.circle(mask19, (int(cx - fw * 1.02), int(cy + fh * 0.22)), 2,
                   _L["ear_r"], -1)

    shade = 1.0 + sample_rng.uniform(-0.05, 0.05) \
        * np.linspace(-1, 1, size, dtype=np.float32)[None, :, None]
    noise = sample_rng.normal(0, 0.008, photo.shape).astype(np.float32)
    photo = np.clip(photo * shade + noise, 0.0, 1.0)
    return photo, mask19.astype(np.int64)


def write_toy_dataset(root: Path, n_identities: int = 12,
                      samples_per_identity: int = 4, image_size: int = 120,
                      seed: int = 0) -> list[str]:
    """Render a raw toy dataset under root/photos and root/masks."""
    root = Path(root)
    (root / "photos").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    stems = []
    for ident in range(n_identities):
        params = _identity_params(np.random.default_rng([seed, ident]))
        for j in range(samples_per_identity):
            sample_rng = np.random.default_rng([seed, ident, j])
            photo, mask19 = render_face(image_size, params, sample_rng)
            stem = f"id{ident:02d}_{j:02d}"
            save_photo(root / "photos" / f"{stem}.png", photo)
            save_mask(root / "masks" / f"{stem}.png", mask19)
            stems.append(stem)
    return stems


def main(argv=None):
    parser = argparse.ArgumentParser(description="render a toy face dataset")
    parser.add_argument("root", help="output directory")
    parser.add_argument("--identities", type=int, default=12)
    parser.add_argument("--samples", type=int, default=4)
    parser.add_argument("--size", type=int, default=120)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    stems = write_toy_dataset(args.root, args.identities, args.samples,
                              args.size, args.seed)
    print(f"wrote {len(stems)} photo/mask pairs under {args.root}")


if __name__ == "__main__":
    main()
