import numpy as np
import pytest

from faceveil.dataset import (DatasetConfig, DatasetError, FaceSample, NUM_CLASSES,
                              SemanticMask, TrainingDataset, identity_from_stem,
                              load_mask_file, load_photo, load_prepared,
                              prepare_pairs, reduce_classes, sample_triple,
                              save_mask, save_photo, split_stems, write_prepared)
from faceveil.detectors import FaceDetector

# hand-derived from the documented 19 -> 11 mapping table
EXPECTED_FOR_SOURCE_IDS = [0, 1, 2, 10, 3, 3, 4, 4, 5, 5, 6, 7, 7, 8, 0, 0, 0, 9, 0]


class NullDetector(FaceDetector):
    def detect(self, image):
        return []


def test_reduce_all_source_ids_match_mapping_table():
    row = np.arange(19).reshape(1, 19)
    out = reduce_classes(row)
    assert out.labels.tolist() == [EXPECTED_FOR_SOURCE_IDS]


def test_reduce_4x4_fixture():
    mask19 = np.array([[0, 1, 2, 3],
                       [4, 5, 6, 7],
                       [8, 9, 10, 11],
                       [12, 13, 14, 18]])
    expected = np.array([[0, 1, 2, 10],
                         [3, 3, 4, 4],
                         [5, 5, 6, 7],
                         [7, 8, 0, 0]])
    assert np.array_equal(reduce_classes(mask19).labels, expected)


def test_reduce_merges_left_right_eyes():
    mask19 = np.zeros((4, 6), dtype=int)
    mask19[1, 1] = 4  # left eye
    mask19[1, 4] = 5  # right eye
    out = reduce_classes(mask19).labels
    assert out[1, 1] == out[1, 4] == 3


def test_reduce_all_background_identity():
    out = reduce_classes(np.zeros((5, 5), dtype=int))
    assert not out.labels.any()


def test_reduce_rejects_unknown_ids():
    bad = np.zeros((2, 2), dtype=int)
    bad[0, 0] = 19
    with pytest.raises(DatasetError, match="19"):
        reduce_classes(bad)


def test_reduce_idempotent_under_identity_extension():
    # extending the mapping with identity on the reduced ids, a second
    # application changes nothing
    rng = np.random.default_rng(0)
    mask19 = rng.integers(0, 19, size=(16, 16))
    once = reduce_classes(mask19).labels
    extension = np.arange(NUM_CLASSES)
    assert np.array_equal(extension[once], once)


def test_semantic_mask_rejects_out_of_range():
    with pytest.raises(DatasetError):
        SemanticMask(np.full((2, 2), 11))


def test_face_sample_rejects_dimension_mismatch():
    with pytest.raises(DatasetError):
        FaceSample(np.zeros((4, 4, 3)), SemanticMask(np.zeros((5, 5), dtype=int)),
                   "a", 32)


def test_identity_from_stem():
    assert identity_from_stem("id3_0007") == "id3"
    assert identity_from_stem("plain") == "plain"


def test_photo_and_mask_io_roundtrip(tmp_path):
    photo = np.random.default_rng(0).random((16, 16, 3)).astype(np.float32)
    save_photo(tmp_path / "p.png", photo)
    loaded = load_photo(tmp_path / "p.png")
    assert np.abs(loaded - photo).max() <= 0.5 / 255 + 1e-6
    mask = np.random.default_rng(1).integers(0, 19, size=(16, 16))
    save_mask(tmp_path / "m.png", mask)
    assert np.array_equal(load_mask_file(tmp_path / "m.png"), mask)


def _write_raw(root, stems, size=48):
    (root / "photos").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    for stem in stems:
        save_photo(root / "photos" / f"{stem}.png", rng.random((size, size, 3)))
        save_mask(root / "masks" / f"{stem}.png", rng.integers(0, 19, (size, size)))


def test_prepare_pairs_counts_and_resolutions(tmp_path):
    _write_raw(tmp_path, [f"id{i}_0" for i in range(4)])
    cfg = DatasetConfig(root=str(tmp_path), resolution_set=(32,), image_size=32)
    samples, stats = prepare_pairs(cfg, NullDetector())
    assert len(samples) == 4 and stats.usable_stems == 4
    assert all(s.photo.shape == (32, 32, 3) for s in samples)
    assert len(stats.no_face) == 4  # null detector never finds a face

    cfg3 = DatasetConfig(root=str(tmp_path), resolution_set=(64, 48, 32),
                         image_size=64)
    samples3, stats3 = prepare_pairs(cfg3, NullDetector())
    assert len(samples3) == stats3.usable_stems * 3
    assert [s.source_resolution for s in samples3[:3]] == [64, 48, 32]
    # degraded replicas keep the canvas size but lose detail
    assert samples3[0].photo.shape == samples3[2].photo.shape
    assert not np.array_equal(samples3[0].photo, samples3[2].photo)


def test_prepare_pairs_skips_incomplete_and_corrupt(tmp_path):
    _write_raw(tmp_path, ["a_0", "b_0", "c_0"])
    (tmp_path / "masks" / "a_0.png").unlink()          # photo without mask
    (tmp_path / "masks" / "b_0.png").write_bytes(b"nonsense")  # corrupt
    cfg = DatasetConfig(root=str(tmp_path), resolution_set=(32,), image_size=32)
    samples, stats = prepare_pairs(cfg, NullDetector())
    assert stats.missing_pair == ["a_0"]
    assert stats.corrupt == ["b_0"]
    assert stats.usable_stems == 1 and len(samples) == 1


def test_prepare_pairs_requires_layout(tmp_path):
    with pytest.raises(DatasetError, match="photos"):
        prepare_pairs(DatasetConfig(root=str(tmp_path)), NullDetector())


def test_mask_values_stay_in_reduced_space(toy_dataset):
    for i in range(len(toy_dataset)):
        values = np.unique(toy_dataset[i].mask.labels)
        assert set(values) <= set(range(NUM_CLASSES))


def test_split_holds_out_requested_fraction():
    stems = [f"s{i:05d}" for i in range(30000)]
    train, held = split_stems(stems, seed=3, holdout_fraction=0.05)
    assert len(held) == 1500 and len(train) == 28500
    assert set(train) | set(held) == set(stems)
    assert not set(train) & set(held)
    train2, held2 = split_stems(stems, seed=3, holdout_fraction=0.05)
    assert held == held2 and train == train2


def _tiny_dataset(n_identities, per_identity, size=4):
    rng = np.random.default_rng(9)
    samples = []
    for ident in range(n_identities):
        for _ in range(per_identity):
            samples.append(FaceSample(
                rng.random((size, size, 3)).astype(np.float32),
                SemanticMask(rng.integers(0, NUM_CLASSES, (size, size))),
                f"id{ident}", size))
    return TrainingDataset(samples)


def test_sample_triple_forced_choice_and_error():
    ds = _tiny_dataset(2, 1)
    rng = np.random.default_rng(0)
    x, y, ref = sample_triple(rng, ds, index=0)
    assert np.array_equal(ref, ds[1].photo)
    single = _tiny_dataset(1, 1)
    with pytest.raises(DatasetError):
        sample_triple(np.random.default_rng(0), single, index=0)


def test_sample_triple_deterministic_sequence():
    ds = _tiny_dataset(3, 3)
    seq1 = [sample_triple(np.random.default_rng(42), ds, index=i)[2].sum()
            for i in range(len(ds))]
    seq2 = [sample_triple(np.random.default_rng(42), ds, index=i)[2].sum()
            for i in range(len(ds))]
    assert seq1 == seq2


def test_sample_triple_always_crosses_identity():
    ds = _tiny_dataset(10, 3)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        idx = int(rng.integers(len(ds)))
        ref = ds.draw_reference_index(rng, idx)
        assert ds[ref].identity != ds[idx].identity


def test_sample_triple_never_bitwise_identical():
    ds = _tiny_dataset(1, 2)  # one identity forces the fallback pool
    rng = np.random.default_rng(5)
    for i in range(2):
        x, _, ref = sample_triple(rng, ds, index=i)
        assert not np.array_equal(x, ref)


def test_prepared_roundtrip(tmp_path, toy_dataset):
    samples = [toy_dataset[i] for i in range(4)]
    write_prepared(tmp_path, samples, [f"st{i}" for i in range(4)])
    loaded = load_prepared(tmp_path)
    assert len(loaded) == 4
    for i in range(4):
        assert loaded[i].identity == samples[i].identity
        assert np.array_equal(loaded[i].mask.labels, samples[i].mask.labels)
        assert np.abs(loaded[i].photo - samples[i].photo).max() <= 0.5 / 255 + 1e-6
