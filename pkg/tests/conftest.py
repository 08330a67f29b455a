import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from faceveil.dataset import DatasetConfig, TrainingDataset, prepare_pairs
from faceveil.detectors import SkinBlobDetector
from faceveil.networks import ModelConfig, build_models
from faceveil.toydata import write_toy_dataset

TINY_MODEL = dict(image_size=32, seg_width=4, disc_width=4, synth_width=4,
                  synth_disc_width=4, res_blocks=1, num_scales=2, disc_layers=1,
                  percep_scale=0.1)


@pytest.fixture(scope="session")
def toy_raw_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyraw")
    write_toy_dataset(root, n_identities=6, samples_per_identity=3,
                      image_size=96, seed=11)
    return root


@pytest.fixture(scope="session")
def toy_dataset(toy_raw_root) -> TrainingDataset:
    cfg = DatasetConfig(root=str(toy_raw_root), resolution_set=(32,), image_size=32)
    samples, _ = prepare_pairs(cfg, SkinBlobDetector())
    return TrainingDataset(samples)


@pytest.fixture(scope="session")
def tiny_bundle():
    return build_models(ModelConfig(**TINY_MODEL), seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
