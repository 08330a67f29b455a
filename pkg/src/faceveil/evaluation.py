"""Dissimilarity evaluation: a twin-branch embedding trained with a
contrastive objective, criterion distances from same/different-identity
pairs, and per-dataset mean distance between originals and their
anonymized counterparts.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dataset import TrainingDataset
from .networks import to_tensor

log = logging.getLogger(__name__)


class EvaluationError(Exception):
    pass


@dataclass
class EvalConfig:
    embed_dim: int = 128
    embed_width: int = 16
    contrastive_margin: float = 2.0
    embed_epochs: int = 5
    embed_lr: float = 1e-3
    pairs_per_step: int = 8
    seed: int = 0
    checkpoint: str = ""        # anonymizer (generator) checkpoint
    embed_checkpoint: str = ""  # trained embedding; trained in place if empty


@dataclass
class DatasetRow:
    name: str
    n: int
    mean_distance: float


@dataclass
class EvalReport:
    criterion_same: float
    criterion_diff: float
    rows: list[DatasetRow]

    @property
    def criterion_gap(self) -> float:
        return self.criterion_diff - self.criterion_same

    def to_text(self) -> str:
        lines = [
            "embedding-distance evaluation",
            f"criterion_same_identity: {self.criterion_same:.4f}",
            f"criterion_different_identity: {self.criterion_diff:.4f}",
            f"criterion_gap: {self.criterion_gap:.4f}",
            "",
            "original vs anonymized mean distance:",
        ]
        for row in self.rows:
            lines.append(f"  {row.name}: n={row.n} mean={row.mean_distance:.4f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["dataset,n,mean_distance"]
        for row in self.rows:
            lines.append(f"{row.name},{row.n},{row.mean_distance:.6f}")
        return "\n".join(lines) + "\n"


class InceptionResBlock(nn.Module):
    """Parallel 1x1 / 3x3 branches fused back onto a residual path."""

    def __init__(self, channels: int):
        super().__init__()
        half = max(4, channels // 2)
        self.branch1 = nn.Conv2d(channels, half, 1)
        self.branch3 = nn.Sequential(
            nn.Conv2d(channels, half, 1),
            nn.GroupNorm(2, half),
            nn.ReLU(inplace=True),
            nn.Conv2d(half, half, 3, padding=1),
        )
        self.fuse = nn.Conv2d(2 * half, channels, 1)
        self.norm = nn.GroupNorm(4, channels)

    def forward(self, x):
        h = torch.cat([self.branch1(x), self.branch3(x)], dim=1)
        return F.relu(self.norm(x + self.fuse(h)))


class EmbeddingNet(nn.Module):
    """Face -> d-dimensional vector; near for same identity, far otherwise."""

    def __init__(self, width: int = 16, dim: int = 128):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.GroupNorm(4, width),
            nn.ReLU(inplace=True),
        )
        stages = []
        ch = width
        for _ in range(3):
            stages.append(InceptionResBlock(ch))
            stages.append(nn.Sequential(
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.GroupNorm(4, ch * 2),
                nn.ReLU(inplace=True),
            ))
            ch *= 2
        self.stages = nn.Sequential(*stages)
        self.head = nn.Linear(ch, dim)

    def forward(self, x):
        h = self.stages(self.stem(x))
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return self.head(h)


def contrastive_loss(dist: torch.Tensor, same: torch.Tensor,
                     margin: float) -> torch.Tensor:
    """Pull same-identity pairs together, push others past the margin."""
    pos = same * dist.pow(2)
    neg = (1.0 - same) * F.relu(margin - dist).pow(2)
    return (pos + neg).mean()


def embed(model: nn.Module, face: np.ndarray) -> np.ndarray:
    """Single face image in [0,1] -> embedding vector."""
    model.eval()
    with torch.no_grad():
        return model(to_tensor(face)).squeeze(0).numpy()


def embed_batch(model: nn.Module, faces: list[np.ndarray]) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        batch = torch.cat([to_tensor(f) for f in faces])
        return model(batch).numpy()


def pair_distance(model: nn.Module, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(embed(model, a) - embed(model, b)))


def _canonical_order(dataset: TrainingDataset) -> list[int]:
    """Content-derived ordering so evaluation ignores dataset ordering."""
    keys = []
    for i in range(len(dataset)):
        s = dataset[i]
        digest = hashlib.sha1(np.ascontiguousarray(s.photo).tobytes()).hexdigest()
        keys.append((s.identity, digest, i))
    return [i for _, _, i in sorted(keys)]


def _criterion_pairs(dataset: TrainingDataset,
                     max_pairs: int = 256) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Deterministic same-identity and different-identity pair lists."""
    order = _canonical_order(dataset)
    by_identity: dict[str, list[int]] = {}
    for i in order:
        by_identity.setdefault(dataset[i].identity, []).append(i)
    idents = sorted(by_identity)
    same = []
    for ident in idents:
        members = by_identity[ident]
        same.extend((members[k], members[k + 1]) for k in range(len(members) - 1))
    diff = []
    for a_pos, ident_a in enumerate(idents):
        ident_b = idents[(a_pos + 1) % len(idents)]
        if ident_a == ident_b:
            continue
        for a, b in zip(by_identity[ident_a], by_identity[ident_b]):
            diff.append((a, b))
    return same[:max_pairs], diff[:max_pairs]


def measure_criterion(model: nn.Module, dataset: TrainingDataset) -> tuple[float, float]:
    """Mean embedding distance over same-identity and different-identity pairs."""
    same, diff = _criterion_pairs(dataset)
    if not same or not diff:
        raise EvaluationError("criterion needs identities with >= 2 samples "
                              "and >= 2 distinct identities")

    def mean_distance(pairs):
        vals = []
        for a, b in pairs:
            vals.append(pair_distance(model, dataset[a].photo, dataset[b].photo))
        return float(np.mean(vals))

    return mean_distance(same), mean_distance(diff)


def train_embedding(dataset: TrainingDataset, cfg: EvalConfig) -> nn.Module:
    """Contrastive training on identity-labeled samples."""
    if dataset.num_identities() < 2:
        raise EvaluationError("embedding training needs >= 2 identities")
    torch.manual_seed(cfg.seed)
    model = EmbeddingNet(cfg.embed_width, cfg.embed_dim)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.embed_lr)
    by_identity: dict[str, list[int]] = {}
    for i in range(len(dataset)):
        by_identity.setdefault(dataset[i].identity, []).append(i)
    idents = sorted(k for k, v in by_identity.items() if len(v) >= 2)
    if not idents:
        raise EvaluationError("no identity has >= 2 samples")

    model.train()
    for epoch in range(cfg.embed_epochs):
        rng = np.random.default_rng([cfg.seed, 0xE0B, epoch])
        steps = max(1, len(dataset) // cfg.pairs_per_step)
        for _ in range(steps):
            lefts, rights, sames = [], [], []
            for _ in range(cfg.pairs_per_step):
                if rng.random() < 0.5:
                    ident = idents[rng.integers(len(idents))]
                    a, b = rng.choice(by_identity[ident], size=2, replace=False)
                    sames.append(1.0)
                else:
                    all_idents = sorted(by_identity)
                    ia, ib = rng.choice(len(all_idents), size=2, replace=False)
                    a = by_identity[all_idents[ia]][
                        rng.integers(len(by_identity[all_idents[ia]]))]
                    b = by_identity[all_idents[ib]][
                        rng.integers(len(by_identity[all_idents[ib]]))]
                    sames.append(0.0)
                lefts.append(to_tensor(dataset[int(a)].photo))
                rights.append(to_tensor(dataset[int(b)].photo))
            za = model(torch.cat(lefts))
            zb = model(torch.cat(rights))
            dist = (za - zb).pow(2).sum(dim=1).clamp(min=1e-12).sqrt()
            loss = contrastive_loss(dist, torch.tensor(sames), cfg.contrastive_margin)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
        log.info("embedding epoch %d: loss %.4f", epoch, float(loss.detach()))
    model.eval()
    return model


def evaluate_anonymizer(model: nn.Module, anonymize_fn,
                        datasets: dict[str, TrainingDataset],
                        criterion_dataset: TrainingDataset) -> EvalReport:
    """Mean original-vs-anonymized embedding distance per dataset.

    anonymize_fn maps a photo array to its anonymized version; passing the
    identity function gives the zero-distance baseline.
    """
    if not datasets:
        raise EvaluationError("no datasets to evaluate")
    crit_same, crit_diff = measure_criterion(model, criterion_dataset)
    rows = []
    for name in sorted(datasets):
        ds = datasets[name]
        if len(ds) == 0:
            raise EvaluationError(f"dataset {name!r} is empty")
        dists = []
        for i in _canonical_order(ds):
            original = ds[i].photo
            anonymized = anonymize_fn(original)
            dists.append(pair_distance(model, original, anonymized))
        rows.append(DatasetRow(name, len(dists), float(np.mean(dists))))
    return EvalReport(crit_same, crit_diff, rows)
