"""Differentiable training losses.

Adversarial terms use the log form on per-patch probabilities; every L1-type
distance is normalized by element count so weights stay comparable across
resolutions. Component-restricted terms zero out all pixels except one
facial label before a discriminator or feature extractor sees the image.

Discriminator duck-typing: a patch discriminator is a callable returning a
probability grid, with `.features(x)` returning layer activations whose last
entry is that grid; a multi-scale discriminator returns a list of grids (one
per scale) and `.features(x)` a list of per-scale activation lists.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .dataset import NUM_CLASSES, NUM_FACIAL_CLASSES


@dataclass
class LossConfig:
    lambda_cyc: float = 10.0
    lambda_s: float = 10.0
    lambda_dist: float = 10.0
    margins: tuple[float, ...] = ()  # one per perceptual layer; empty until calibrated
    component_labels: tuple[int, ...] = (1, 2, 3, 6)  # skin, nose, eyes, mouth
    log_eps: float = 1e-7

    def __post_init__(self):
        if min(self.lambda_cyc, self.lambda_s, self.lambda_dist) < 0:
            raise ValueError("loss weights must be non-negative")
        if any(e < 0 for e in self.margins):
            raise ValueError("margins must be non-negative")
        labels = tuple(self.component_labels)
        if not labels or not set(labels) <= set(range(1, NUM_CLASSES)):
            raise ValueError("component labels must be facial ids in 1..10")
        if len(set(labels)) >= NUM_FACIAL_CLASSES:
            raise ValueError("component label set must be a strict subset of the "
                             f"{NUM_FACIAL_CLASSES} facial labels")
        self.component_labels = labels
        self.margins = tuple(self.margins)


@dataclass
class TrainingBatch:
    """One (photo, mask, cross-identity reference) triple as tensors."""

    photo: torch.Tensor        # N,3,H,W in [0,1]
    mask_onehot: torch.Tensor  # N,11,H,W
    mask_labels: torch.Tensor  # N,H,W long
    reference: torch.Tensor    # N,3,H,W different-identity photo
    reference_labels: torch.Tensor  # N,H,W long, the reference's own mask


def _log_clamped(p: torch.Tensor, eps: float, stats: dict | None, key: str) -> torch.Tensor:
    if stats is not None:
        stats[key] = stats.get(key, 0) + int((p < eps).sum())
    return torch.log(p.clamp(min=eps))


def extract_component_torch(images: torch.Tensor, labels: torch.Tensor,
                            label_id: int) -> torch.Tensor:
    """Zero every pixel not carrying label_id; NCHW images, NHW labels."""
    keep = (labels == label_id).unsqueeze(1)
    return torch.where(keep, images, torch.zeros((), dtype=images.dtype))


def adv_loss_generator(disc, fake: torch.Tensor, eps: float = 1e-7,
                       stats: dict | None = None) -> torch.Tensor:
    """Generator-side adversarial term: mean log(1 - D(fake))."""
    p = disc(fake)
    return _log_clamped(1.0 - p, eps, stats, "adv_clamped").mean()


def adv_loss_discriminator(disc, real: torch.Tensor, fake: torch.Tensor,
                           eps: float = 1e-7, stats: dict | None = None) -> torch.Tensor:
    """Discriminator value: mean log D(real) + mean log(1 - D(fake)).

    The discriminator maximizes this; training steps minimize its negation.
    """
    real_term = _log_clamped(disc(real), eps, stats, "adv_clamped").mean()
    fake_term = _log_clamped(1.0 - disc(fake), eps, stats, "adv_clamped").mean()
    return real_term + fake_term


def cycle_loss(recon: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    if recon.shape != original.shape:
        raise ValueError(f"shape mismatch {tuple(recon.shape)} vs {tuple(original.shape)}")
    return (recon - original).abs().mean()


def vgg_margin_loss(percep, x: torch.Tensor, x_syn: torch.Tensor,
                    margins: tuple[float, ...]) -> torch.Tensor:
    """Hinged perceptual distance: per-layer mean L1 gaps below their margin
    cost nothing, so synthesized output is free to drift that far from x.
    """
    feats_x = percep.features(x)
    feats_s = percep.features(x_syn)
    if len(margins) != len(feats_x):
        raise ValueError(f"{len(feats_x)} feature layers but {len(margins)} margins")
    total = x.new_zeros(())
    for fx, fs, eps_i in zip(feats_x, feats_s, margins):
        dist = (fs - fx).abs().mean()
        total = total + torch.clamp(dist - eps_i, min=0.0)
    return total


def component_adv_loss(disc_scales, fake: torch.Tensor, real: torch.Tensor,
                       fake_labels: torch.Tensor, real_labels: torch.Tensor,
                       component_labels: tuple[int, ...], eps: float = 1e-7,
                       stats: dict | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-component adversarial terms averaged over scales and labels.

    Returns (generator term, real term): mean log(1 - D(extract(fake))) and
    mean log D(extract(real)). Their sum is the full adversarial value the
    discriminators maximize. A label absent from a mask contributes through
    an all-zero extraction.
    """
    n_labels = len(component_labels)
    gen_total = fake.new_zeros(())
    real_total = fake.new_zeros(())
    for label_id in component_labels:
        fake_part = extract_component_torch(fake, fake_labels, label_id)
        real_part = extract_component_torch(real, real_labels, label_id)
        if stats is not None and not (fake_labels == label_id).any():
            stats["empty_extractions"] = stats.get("empty_extractions", 0) + 1
        fake_grids = disc_scales(fake_part)
        real_grids = disc_scales(real_part)
        n_scales = len(fake_grids)
        for grid in fake_grids:
            gen_total = gen_total + _log_clamped(1.0 - grid, eps, stats, "adv_clamped").mean() \
                / (n_scales * n_labels)
        for grid in real_grids:
            real_total = real_total + _log_clamped(grid, eps, stats, "adv_clamped").mean() \
                / (n_scales * n_labels)
    return gen_total, real_total


def fm_loss_cross_identity(disc_scales, fake: torch.Tensor, reference: torch.Tensor,
                           fake_labels: torch.Tensor, reference_labels: torch.Tensor,
                           component_labels: tuple[int, ...]) -> torch.Tensor:
    """Feature-matching against a different identity.

    Per scale and component label, sums per-layer mean L1 distances between
    discriminator activations of the extracted reference and the extracted
    synthesized image; averaged over scales and labels.
    """
    n_labels = len(component_labels)
    total = fake.new_zeros(())
    for label_id in component_labels:
        fake_part = extract_component_torch(fake, fake_labels, label_id)
        ref_part = extract_component_torch(reference, reference_labels, label_id)
        fake_feats = disc_scales.features(fake_part)
        ref_feats = disc_scales.features(ref_part)
        n_scales = len(fake_feats)
        for per_scale_fake, per_scale_ref in zip(fake_feats, ref_feats):
            layer_sum = fake.new_zeros(())
            for ff, fr in zip(per_scale_fake, per_scale_ref):
                layer_sum = layer_sum + (ff - fr).abs().mean()
            total = total + layer_sum / (n_scales * n_labels)
    return total


def synthesis_objective_parts(models, batch: TrainingBatch, cfg: LossConfig,
                              seg_scores: torch.Tensor | None = None,
                              detach_seg: bool = False,
                              stats: dict | None = None) -> dict[str, torch.Tensor]:
    """All terms of the synthesis-part objective.

    comp_adv_gen + comp_adv_real is the component adversarial value, fm the
    cross-identity feature match, percep the hinged perceptual distance of
    the synthesized photo from the source, cyc the semantic round trip
    through the segmenter.
    """
    if seg_scores is None:
        seg_scores = models.segmenter(batch.photo)
    if detach_seg:
        seg_scores = seg_scores.detach()
    synth = (models.synthesizer(seg_scores) + 1.0) / 2.0
    fake_labels = seg_scores.argmax(dim=1)

    gen_t, real_t = component_adv_loss(
        models.d_synth, synth, batch.photo, fake_labels, batch.mask_labels,
        cfg.component_labels, cfg.log_eps, stats)
    fm = fm_loss_cross_identity(
        models.d_synth, synth, batch.reference, fake_labels,
        batch.reference_labels, cfg.component_labels)
    percep = vgg_margin_loss(models.percep, batch.photo, synth, cfg.margins)
    cyc = cycle_loss(models.segmenter(synth), seg_scores)
    total = gen_t + real_t + fm + percep + cyc
    return {"comp_adv_gen": gen_t, "comp_adv_real": real_t, "fm": fm,
            "percep": percep, "cyc": cyc, "total": total}


def synthesis_objective(models, batch: TrainingBatch, cfg: LossConfig,
                        seg_scores: torch.Tensor | None = None,
                        detach_seg: bool = False) -> torch.Tensor:
    return synthesis_objective_parts(models, batch, cfg, seg_scores, detach_seg)["total"]


def seg_generator_loss_parts(models, batch: TrainingBatch, cfg: LossConfig,
                             stats: dict | None = None) -> dict[str, torch.Tensor]:
    """Segmenter loss: adversarial + weighted cycle, synthesis and distance terms.

    The synthesis objective enters with a live gradient path through the
    segmenter's soft class scores, which is what couples the two parts.
    """
    scores = models.segmenter(batch.photo)
    adv = adv_loss_generator(models.d_mask, scores, cfg.log_eps, stats)
    cyc = cycle_loss(models.inverse(scores), batch.photo)
    syn = synthesis_objective(models, batch, cfg, seg_scores=scores)
    dist = cycle_loss(scores, batch.mask_onehot)
    total = adv + cfg.lambda_cyc * cyc + cfg.lambda_s * syn + cfg.lambda_dist * dist
    return {"adv": adv, "cyc": cyc, "syn": syn, "dist": dist, "total": total}


def seg_generator_loss(models, batch: TrainingBatch, cfg: LossConfig) -> torch.Tensor:
    return seg_generator_loss_parts(models, batch, cfg)["total"]


def inverse_generator_loss_parts(models, batch: TrainingBatch, cfg: LossConfig,
                                 stats: dict | None = None) -> dict[str, torch.Tensor]:
    """Mask-to-photo generator loss: adversarial plus weighted cycle."""
    fake_photo = models.inverse(batch.mask_onehot)
    adv = adv_loss_generator(models.d_photo, fake_photo, cfg.log_eps, stats)
    cyc = cycle_loss(models.segmenter(fake_photo), batch.mask_onehot)
    total = adv + cfg.lambda_cyc * cyc
    return {"adv": adv, "cyc": cyc, "total": total}


def calibrate_margins(percep, photos_a: torch.Tensor, photos_b: torch.Tensor,
                      quantile: float = 0.25) -> tuple[float, ...]:
    """Per-layer margins from feature distances of different-identity pairs.

    Uses the given quantile of each layer's mean-L1 distance distribution, so
    a margin represents a drift budget smaller than a typical identity swap.
    """
    with torch.no_grad():
        feats_a = percep.features(photos_a)
        feats_b = percep.features(photos_b)
        margins = []
        for fa, fb in zip(feats_a, feats_b):
            per_pair = (fa - fb).abs().mean(dim=(1, 2, 3))
            margins.append(float(torch.quantile(per_pair, quantile)))
    return tuple(margins)
