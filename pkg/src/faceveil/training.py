"""Alternating per-sample training of the segmentation and synthesis parts.

Each dataset pass visits every sample once: draw a (photo, mask, reference)
triple, take one generator step and one discriminator step on the
segmentation part (synthesizer weights held fixed), then one generator and
one discriminator step on the synthesis part (translator weights held
fixed). Every sub-term is logged per step for auditability.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .dataset import TrainingDataset
from .losses import LossConfig, TrainingBatch
from .networks import ModelBundle, ModelConfig, build_models, one_hot_mask, to_tensor

log = logging.getLogger(__name__)

CHECKPOINT_FILES = ("segmenter.pt", "inverse.pt", "d_photo.pt", "d_mask.pt",
                    "synthesizer.pt", "d_synth.pt", "percep.pt")
INFERENCE_FILES = ("segmenter.pt", "synthesizer.pt")
OPTIMIZER_FILE = "optim.pt"
MANIFEST_FILE = "manifest.json"


class CheckpointError(Exception):
    """Raised when a checkpoint directory cannot be loaded as requested."""


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 1
    lr: float = 2e-4
    beta1_seg: float = 0.5
    beta1_syn: float = 0.0
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 1  # epochs
    margin_quantile: float = 0.25
    margin_pairs: int = 32

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainState:
    optimizers: dict[str, torch.optim.Optimizer]
    epoch: int = 0
    step: int = 0
    incidents: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def make_optimizers(models: ModelBundle, cfg: TrainConfig) -> dict[str, torch.optim.Optimizer]:
    seg_params = list(models.segmenter.parameters()) + list(models.inverse.parameters())
    seg_d_params = list(models.d_photo.parameters()) + list(models.d_mask.parameters())
    return {
        "seg_gen": torch.optim.Adam(seg_params, lr=cfg.lr,
                                    betas=(cfg.beta1_seg, cfg.beta2)),
        "seg_disc": torch.optim.Adam(seg_d_params, lr=cfg.lr,
                                     betas=(cfg.beta1_seg, cfg.beta2)),
        "syn_gen": torch.optim.Adam(models.synthesizer.parameters(), lr=cfg.lr,
                                    betas=(cfg.beta1_syn, cfg.beta2)),
        "syn_disc": torch.optim.Adam(models.d_synth.parameters(), lr=cfg.lr,
                                     betas=(cfg.beta1_syn, cfg.beta2)),
    }


def lr_factor(epoch: int, total_epochs: int) -> float:
    """Constant for the first half of training, then linear decay."""
    decay_start = total_epochs // 2
    if total_epochs <= 1 or epoch < decay_start:
        return 1.0
    return 1.0 - (epoch - decay_start) / (total_epochs - decay_start + 1)


def set_learning_rate(optimizers: dict, base_lr: float, factor: float) -> None:
    for opt in optimizers.values():
        for group in opt.param_groups:
            group["lr"] = base_lr * factor


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Per-epoch stream so a resumed run replays the same draw sequence."""
    return np.random.default_rng([seed, epoch])


def build_batch(dataset: TrainingDataset, index: int, ref_index: int) -> TrainingBatch:
    sample = dataset[index]
    ref = dataset[ref_index]
    labels = torch.as_tensor(sample.mask.labels, dtype=torch.long).unsqueeze(0)
    return TrainingBatch(
        photo=to_tensor(sample.photo),
        mask_onehot=one_hot_mask(sample.mask.labels),
        mask_labels=labels,
        reference=to_tensor(ref.photo),
        reference_labels=torch.as_tensor(ref.mask.labels, dtype=torch.long).unsqueeze(0),
    )


def _finite(value: torch.Tensor) -> bool:
    return bool(torch.isfinite(value).all())


def _guarded_step(loss: torch.Tensor, optimizer: torch.optim.Optimizer,
                  state: TrainState, part: str) -> bool:
    """Backward + step unless the loss is non-finite; parameters stay intact then."""
    if not _finite(loss):
        state.incidents.append({"step": state.step, "part": part,
                                "value": float(loss.detach())})
        log.warning("non-finite %s loss at step %d; step skipped", part, state.step)
        return False
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return True


def step_seg_generators(models: ModelBundle, batch: TrainingBatch, cfg: LossConfig,
                        state: TrainState) -> dict[str, float]:
    seg = losses.seg_generator_loss_parts(models, batch, cfg, state.stats)
    inv = losses.inverse_generator_loss_parts(models, batch, cfg, state.stats)
    total = seg["total"] + inv["total"]
    _guarded_step(total, state.optimizers["seg_gen"], state, "seg_gen")
    rec = {f"seg.gen.{k}": float(v.detach()) for k, v in seg.items()}
    rec.update({f"seg.inv.{k}": float(v.detach()) for k, v in inv.items()})
    return rec


def step_seg_discriminators(models: ModelBundle, batch: TrainingBatch, cfg: LossConfig,
                            state: TrainState) -> dict[str, float]:
    with torch.no_grad():
        fake_scores = models.segmenter(batch.photo)
        fake_photo = models.inverse(batch.mask_onehot)
    d_mask_val = losses.adv_loss_discriminator(models.d_mask, batch.mask_onehot,
                                               fake_scores, cfg.log_eps, state.stats)
    d_photo_val = losses.adv_loss_discriminator(models.d_photo, batch.photo,
                                                fake_photo, cfg.log_eps, state.stats)
    _guarded_step(-(d_mask_val + d_photo_val), state.optimizers["seg_disc"],
                  state, "seg_disc")
    return {"seg.disc.mask": float(d_mask_val.detach()),
            "seg.disc.photo": float(d_photo_val.detach())}


def step_syn_generator(models: ModelBundle, batch: TrainingBatch, cfg: LossConfig,
                       state: TrainState) -> dict[str, float]:
    parts = losses.synthesis_objective_parts(models, batch, cfg, detach_seg=True,
                                             stats=state.stats)
    _guarded_step(parts["total"], state.optimizers["syn_gen"], state, "syn_gen")
    return {f"syn.gen.{k}": float(v.detach()) for k, v in parts.items()}


def step_syn_discriminators(models: ModelBundle, batch: TrainingBatch, cfg: LossConfig,
                            state: TrainState) -> dict[str, float]:
    with torch.no_grad():
        scores = models.segmenter(batch.photo)
        synth = (models.synthesizer(scores) + 1.0) / 2.0
        fake_labels = scores.argmax(dim=1)
    gen_t, real_t = losses.component_adv_loss(
        models.d_synth, synth, batch.photo, fake_labels, batch.mask_labels,
        cfg.component_labels, cfg.log_eps, state.stats)
    _guarded_step(-(gen_t + real_t), state.optimizers["syn_disc"], state, "syn_disc")
    return {"syn.disc.adv": float((gen_t + real_t).detach())}


def train_epoch(models: ModelBundle, dataset: TrainingDataset, loss_cfg: LossConfig,
                train_cfg: TrainConfig, state: TrainState) -> list[dict[str, float]]:
    """One full pass; returns one record of all logged terms per sample."""
    rng = epoch_rng(train_cfg.seed, state.epoch)
    order = rng.permutation(len(dataset))
    records = []
    for m in models.trainable().values():
        m.train()
    for index in order:
        ref_index = dataset.draw_reference_index(rng, int(index))
        batch = build_batch(dataset, int(index), ref_index)
        rec: dict[str, float] = {"step": state.step, "sample": int(index)}
        rec.update(step_seg_generators(models, batch, loss_cfg, state))
        rec.update(step_seg_discriminators(models, batch, loss_cfg, state))
        rec.update(step_syn_generator(models, batch, loss_cfg, state))
        rec.update(step_syn_discriminators(models, batch, loss_cfg, state))
        rec["gen.total"] = rec["seg.gen.total"] + rec["syn.gen.total"]
        records.append(rec)
        state.step += 1
    state.epoch += 1
    return records


def calibrate_run_margins(models: ModelBundle, dataset: TrainingDataset,
                          loss_cfg: LossConfig, train_cfg: TrainConfig) -> tuple[float, ...]:
    """Fill in margins from different-identity pair distances when unset."""
    if loss_cfg.margins:
        return loss_cfg.margins
    rng = np.random.default_rng([train_cfg.seed, 0x6D61])
    a_list, b_list = [], []
    for _ in range(train_cfg.margin_pairs):
        i = int(rng.integers(len(dataset)))
        j = dataset.draw_reference_index(rng, i)
        a_list.append(to_tensor(dataset[i].photo))
        b_list.append(to_tensor(dataset[j].photo))
    margins = losses.calibrate_margins(models.percep, torch.cat(a_list),
                                       torch.cat(b_list), train_cfg.margin_quantile)
    log.info("calibrated margins: %s", [round(m, 5) for m in margins])
    return margins


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(models: ModelBundle, optimizers: dict | None, path: Path,
                    epoch: int, step: int, config_hash: str,
                    margins: tuple[float, ...]) -> dict:
    """Write one file per network plus optimizer state and a manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    modules = models.all_modules()
    name_map = dict(zip(CHECKPOINT_FILES,
                        ("segmenter", "inverse", "d_photo", "d_mask",
                         "synthesizer", "d_synth", "percep")))
    for fname, key in name_map.items():
        torch.save(modules[key].state_dict(), path / fname)
    if optimizers is not None:
        torch.save({k: opt.state_dict() for k, opt in optimizers.items()},
                   path / OPTIMIZER_FILE)
    files = {f.name: _sha256_file(f) for f in sorted(path.iterdir())
             if f.name != MANIFEST_FILE}
    manifest = {
        "config_hash": config_hash,
        "epoch": epoch,
        "step": step,
        "margins": list(margins),
        "files": files,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (path / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2))
    return manifest


def load_checkpoint(models: ModelBundle, path: Path, optimizers: dict | None = None,
                    expected_config_hash: str | None = None,
                    allow_hash_mismatch: bool = False,
                    inference_only: bool = False) -> dict:
    """Restore networks (and optionally optimizers) from a checkpoint directory.

    Verifies the manifest against the files actually present; a config-hash
    mismatch needs an explicit override. With inference_only only the two
    generators used by the anonymizer are required.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_FILE
    if not manifest_path.is_file():
        raise CheckpointError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())

    required = INFERENCE_FILES if inference_only else CHECKPOINT_FILES
    problems = []
    for fname in required:
        fpath = path / fname
        if not fpath.is_file():
            problems.append(f"{fname}: missing")
        elif fname in manifest.get("files", {}) and _sha256_file(fpath) != manifest["files"][fname]:
            problems.append(f"{fname}: checksum differs from manifest")
    if problems:
        raise CheckpointError("checkpoint does not match its manifest:\n  "
                              + "\n  ".join(problems))

    if expected_config_hash and manifest.get("config_hash") != expected_config_hash:
        msg = (f"checkpoint config hash {manifest.get('config_hash')!r} != "
               f"current {expected_config_hash!r}")
        if not allow_hash_mismatch:
            raise CheckpointError(msg + " (pass the override flag to proceed)")
        log.warning("%s; proceeding as requested", msg)

    name_map = dict(zip(CHECKPOINT_FILES,
                        ("segmenter", "inverse", "d_photo", "d_mask",
                         "synthesizer", "d_synth", "percep")))
    modules = models.all_modules()
    for fname, key in name_map.items():
        if inference_only and fname not in INFERENCE_FILES:
            continue
        state = torch.load(path / fname, map_location="cpu", weights_only=True)
        modules[key].load_state_dict(state)
    if optimizers is not None:
        opt_path = path / OPTIMIZER_FILE
        if not opt_path.is_file():
            raise CheckpointError(f"missing optimizer state: {opt_path}")
        opt_states = torch.load(opt_path, map_location="cpu", weights_only=False)
        for key, opt in optimizers.items():
            opt.load_state_dict(opt_states[key])
    return manifest


def latest_checkpoint(run_dir: Path) -> Path | None:
    ckpt_root = Path(run_dir) / "checkpoints"
    if not ckpt_root.is_dir():
        return None
    candidates = sorted(p for p in ckpt_root.iterdir() if p.is_dir())
    return candidates[-1] if candidates else None


def append_records(run_dir: Path, records: list[dict]) -> None:
    log_path = Path(run_dir) / "losses.jsonl"
    with open(log_path, "a") as fh:
        for rec in records:
            step = rec["step"]
            for term, value in rec.items():
                if term == "step":
                    continue
                fh.write(json.dumps({"step": step, "term": term, "value": value}) + "\n")


def run_training(dataset: TrainingDataset, model_cfg: ModelConfig,
                 loss_cfg: LossConfig, train_cfg: TrainConfig, run_dir: Path,
                 config_hash: str = "", resume: bool = False) -> dict:
    """Full training driver: margins, epochs, loss log, checkpoints.

    Returns a summary with the final checkpoint path and record count.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    models = build_models(model_cfg, train_cfg.seed)
    optimizers = make_optimizers(models, train_cfg)
    state = TrainState(optimizers=optimizers)

    if resume:
        ckpt = latest_checkpoint(run_dir)
        if ckpt is None:
            raise CheckpointError(f"--resume requested but no checkpoint under {run_dir}")
        manifest = load_checkpoint(models, ckpt, optimizers,
                                   expected_config_hash=config_hash or None)
        margins = tuple(manifest["margins"])
        state.epoch = int(manifest["epoch"])
        state.step = int(manifest["step"])
        log.info("resumed from %s at epoch %d", ckpt, state.epoch)
    else:
        margins = calibrate_run_margins(models, dataset, loss_cfg, train_cfg)

    cfg = LossConfig(lambda_cyc=loss_cfg.lambda_cyc, lambda_s=loss_cfg.lambda_s,
                     lambda_dist=loss_cfg.lambda_dist, margins=margins,
                     component_labels=loss_cfg.component_labels,
                     log_eps=loss_cfg.log_eps)

    n_records = 0
    while state.epoch < train_cfg.epochs:
        set_learning_rate(optimizers, train_cfg.lr,
                          lr_factor(state.epoch, train_cfg.epochs))
        epoch_now = state.epoch
        records = train_epoch(models, dataset, cfg, train_cfg, state)
        append_records(run_dir, records)
        n_records += len(records)
        log.info("epoch %d done: gen.total %.4f", epoch_now,
                 records[-1]["gen.total"] if records else float("nan"))
        if ((state.epoch % max(1, train_cfg.checkpoint_every) == 0)
                or state.epoch == train_cfg.epochs):
            save_checkpoint(models, optimizers,
                            run_dir / "checkpoints" / f"ckpt_e{state.epoch:04d}",
                            state.epoch, state.step, config_hash, margins)

    final = latest_checkpoint(run_dir)
    if final is None:  # zero-epoch run still leaves a usable initial checkpoint
        final = run_dir / "checkpoints" / "ckpt_e0000"
        save_checkpoint(models, optimizers, final, 0, 0, config_hash, margins)
    return {"checkpoint": str(final), "steps": state.step, "records": n_records,
            "incidents": state.incidents, "margins": list(margins)}
