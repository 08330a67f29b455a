import numpy as np
import pytest

from faceveil.dataset import NUM_CLASSES, SemanticMask
from faceveil.mask_algebra import (background_mask, composite, extract_component,
                                   foreground_mask)


def test_extract_keeps_only_requested_label():
    mask = np.zeros((8, 8), dtype=np.int64)
    mask[2:5, 3:6] = 2  # nose patch
    image = np.random.default_rng(0).random((8, 8, 3)).astype(np.float32)
    out = extract_component(2, image, mask)
    assert np.array_equal(out[2:5, 3:6], image[2:5, 3:6])
    outside = out.copy()
    outside[2:5, 3:6] = 0
    assert not outside.any()


def test_extract_absent_label_is_all_zero():
    image = np.ones((4, 4, 3))
    mask = np.zeros((4, 4), dtype=np.int64)
    assert not extract_component(7, image, mask).any()


def test_extract_hand_case_2x2():
    image = np.arange(4, dtype=np.float64).reshape(2, 2) + 1.0  # [[1,2],[3,4]]
    mask = np.array([[1, 1], [0, 2]])
    out = extract_component(1, image, mask)
    assert np.array_equal(out, np.array([[1.0, 2.0], [0.0, 0.0]]))


def test_extract_rejects_shape_mismatch_and_bad_label():
    with pytest.raises(ValueError):
        extract_component(1, np.ones((4, 4, 3)), np.zeros((5, 5), dtype=int))
    with pytest.raises(ValueError):
        extract_component(11, np.ones((4, 4, 3)), np.zeros((4, 4), dtype=int))


def test_binarizers_trivial_and_hand_cases():
    assert not foreground_mask(np.zeros((3, 3), dtype=int)).any()
    assert background_mask(np.zeros((3, 3), dtype=int)).all()
    assert foreground_mask(np.full((3, 3), 1)).all()
    mixed = np.array([[0, 3], [5, 0]])
    assert np.array_equal(foreground_mask(mixed), np.array([[0, 1], [1, 0]]))
    assert np.array_equal(background_mask(mixed), np.array([[1, 0], [0, 1]]))


def test_binarizers_accept_semantic_mask_objects():
    mask = SemanticMask(np.array([[0, 4], [9, 0]]))
    assert np.array_equal(foreground_mask(mask), np.array([[0, 1], [1, 0]]))


def test_composite_trivial_cases():
    rng = np.random.default_rng(1)
    f_a = rng.random((6, 6, 3)).astype(np.float32)
    f_d = rng.random((6, 6, 3)).astype(np.float32)
    all_bg = np.zeros((6, 6), dtype=int)
    all_fg = np.ones((6, 6), dtype=int)
    assert np.array_equal(composite(f_a, f_d, all_bg), f_d)
    assert np.array_equal(composite(f_a, f_d, all_fg), f_a)


def test_composite_half_half():
    f_a = np.full((2, 4, 3), 0.25, dtype=np.float32)
    f_d = np.full((2, 4, 3), 0.75, dtype=np.float32)
    mask = np.zeros((2, 4), dtype=int)
    mask[:, :2] = 1  # left half foreground
    out = composite(f_a, f_d, mask)
    assert np.array_equal(out[:, :2], f_a[:, :2])
    assert np.array_equal(out[:, 2:], f_d[:, 2:])


def test_composite_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        composite(np.ones((4, 4, 3)), np.ones((4, 5, 3)), np.zeros((4, 4), dtype=int))


def test_property_sweep_over_random_masks():
    """1000 random masks: complement identity, reconstruction, background
    preservation, composite idempotence."""
    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(1000):
        h, w = rng.integers(2, 12, size=2)
        mask = rng.integers(0, NUM_CLASSES, size=(h, w))
        image = rng.random((h, w, 3)).astype(np.float32)
        other = rng.random((h, w, 3)).astype(np.float32)

        fg, bg = foreground_mask(mask), background_mask(mask)
        if not ((fg + bg == 1).all() and (fg * bg == 0).all()):
            failures += 1
        reconstructed = sum(extract_component(i, image, mask)
                            for i in range(NUM_CLASSES))
        if not np.array_equal(reconstructed, image):
            failures += 1
        blended = composite(other, image, mask)
        if not np.array_equal(blended[bg.astype(bool)], image[bg.astype(bool)]):
            failures += 1
        if not np.array_equal(composite(blended, image, mask), blended):
            failures += 1
    assert failures == 0
