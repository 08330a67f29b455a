"""Command-line entry point: prepare-data, train, anonymize, eval.

Exit codes: 0 success, 2 dataset errors, 3 model/checkpoint errors,
4 media errors, 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import reporting
from .anonymizer import MediaError, anonymize_frame, anonymize_video
from .config import ConfigError, RunConfig, config_hash, load_config, write_snapshot
from .dataset import (DatasetError, load_photo, load_prepared, prepare_pairs,
                      save_photo, split_stems, write_prepared)
from .detectors import build_detector
from .evaluation import (EmbeddingNet, EvaluationError, evaluate_anonymizer,
                         train_embedding)
from .networks import build_models
from .training import CheckpointError, latest_checkpoint, load_checkpoint, run_training

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_DATASET = 2
EXIT_MODEL = 3
EXIT_MEDIA = 4

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
VIDEO_EXTENSIONS = (".avi", ".mp4", ".mov", ".mkv")


def _seed_everything(seed: int) -> None:
    np.random.seed(seed)
    torch.manual_seed(seed)


def cmd_prepare(cfg: RunConfig, force: bool) -> int:
    prepared = Path(cfg.prepared_dir)
    if (prepared / "manifest.txt").exists() and not force:
        raise DatasetError(f"{prepared} already holds a prepared dataset; "
                           "pass --force to overwrite")
    detector = build_detector(cfg.anonymize.detector)
    samples, stats = prepare_pairs(cfg.dataset, detector)
    if not samples:
        raise DatasetError(f"no usable photo/mask pairs under {cfg.dataset.root}")
    write_prepared(prepared, samples, stats.emitted)
    train_stems, held_stems = split_stems(
        sorted(set(stats.emitted)), cfg.dataset.split_seed,
        cfg.dataset.holdout_fraction)
    split_lines = [f"train {s}" for s in train_stems] + [f"test {s}" for s in held_stems]
    (prepared / "split.txt").write_text("\n".join(split_lines) + "\n")
    write_snapshot(cfg, cfg.out_dir)
    print(f"prepared {len(samples)} pairs from {stats.usable_stems} stems "
          f"({len(train_stems)} train / {len(held_stems)} held out)")
    for label, items in (("missing pair", stats.missing_pair),
                         ("corrupt", stats.corrupt), ("no face", stats.no_face)):
        if items:
            print(f"  {label}: {len(items)} ({', '.join(items[:5])}"
                  f"{'...' if len(items) > 5 else ''})")
    return EXIT_OK


def cmd_train(cfg: RunConfig, resume: bool) -> int:
    prepared = Path(cfg.prepared_dir)
    if not (prepared / "manifest.txt").exists():
        raise DatasetError(f"no prepared dataset at {prepared}; run prepare-data first")
    dataset = load_prepared(prepared)
    write_snapshot(cfg, cfg.out_dir)
    summary = run_training(dataset, cfg.model, cfg.loss, cfg.train,
                           Path(cfg.out_dir), config_hash(cfg), resume=resume)
    figure = reporting.write_loss_curves(Path(cfg.out_dir))
    print(f"trained {summary['steps']} steps; checkpoint: {summary['checkpoint']}")
    if summary["incidents"]:
        print(f"  skipped steps on non-finite losses: {len(summary['incidents'])}")
    if figure:
        print(f"  loss curves: {figure}")
    return EXIT_OK


def _load_inference_bundle(cfg: RunConfig, allow_mismatch: bool):
    ckpt = cfg.anonymize.checkpoint or latest_checkpoint(Path(cfg.out_dir))
    if not ckpt or not Path(ckpt).is_dir():
        raise CheckpointError(
            "no generator checkpoint: set [anonymize] checkpoint or train first "
            f"(looked under {cfg.out_dir}/checkpoints)")
    bundle = build_models(cfg.model, cfg.seed)
    load_checkpoint(bundle, Path(ckpt), expected_config_hash=config_hash(cfg),
                    allow_hash_mismatch=allow_mismatch, inference_only=True)
    bundle.eval_mode()
    return bundle


def cmd_anonymize(cfg: RunConfig, input_path: str, output_path: str,
                  allow_mismatch: bool) -> int:
    src, dst = Path(input_path), Path(output_path)
    if not src.exists():
        raise MediaError(f"input not found: {src}")
    bundle = _load_inference_bundle(cfg, allow_mismatch)
    detector = build_detector(cfg.anonymize.detector)

    def one_image(in_file: Path, out_file: Path):
        frame = load_photo(in_file)
        out, stats = anonymize_frame(frame, bundle, detector, cfg.anonymize)
        out_file.parent.mkdir(parents=True, exist_ok=True)
        save_photo(out_file, out)
        return stats

    if src.is_dir():
        images = [p for p in sorted(src.iterdir())
                  if p.suffix.lower() in IMAGE_EXTENSIONS]
        if not images:
            raise MediaError(f"no images with {IMAGE_EXTENSIONS} under {src}")
        dst.mkdir(parents=True, exist_ok=True)
        total = 0
        for img in images:
            stats = one_image(img, dst / img.name)
            total += stats.faces_anonymized
        print(f"anonymized {total} faces across {len(images)} images -> {dst}")
    elif src.suffix.lower() in IMAGE_EXTENSIONS:
        stats = one_image(src, dst)
        print(f"faces detected={stats.faces_detected} "
              f"anonymized={stats.faces_anonymized} -> {dst}")
    elif src.suffix.lower() in VIDEO_EXTENSIONS:
        summary = anonymize_video(src, dst, bundle, detector, cfg.anonymize)
        summary_path = dst.with_suffix(dst.suffix + ".summary.txt")
        summary_path.write_text(summary.to_text())
        print(summary.to_text())
        print(f"summary: {summary_path}")
    else:
        raise MediaError(f"unsupported media type {src.suffix!r}; supported: "
                         f"images {IMAGE_EXTENSIONS}, video {VIDEO_EXTENSIONS}, "
                         "or a directory of images")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, passthrough: bool, allow_mismatch: bool) -> int:
    prepared = Path(cfg.prepared_dir)
    if not (prepared / "manifest.txt").exists():
        raise DatasetError(f"no prepared dataset at {prepared}; run prepare-data first")
    dataset = load_prepared(prepared)

    if cfg.eval.embed_checkpoint:
        embed_path = Path(cfg.eval.embed_checkpoint)
        if not embed_path.is_file():
            raise CheckpointError(f"embedding checkpoint not found: {embed_path}")
        embedder = EmbeddingNet(cfg.eval.embed_width, cfg.eval.embed_dim)
        embedder.load_state_dict(torch.load(embed_path, map_location="cpu",
                                            weights_only=True))
        embedder.eval()
    else:
        log.info("no embedding checkpoint configured; training one now")
        embedder = train_embedding(dataset, cfg.eval)
        embed_dir = Path(cfg.out_dir) / "embedding"
        embed_dir.mkdir(parents=True, exist_ok=True)
        torch.save(embedder.state_dict(), embed_dir / "embed.pt")

    if passthrough:
        def anonymize_fn(photo):
            return photo.copy()
    else:
        bundle = _load_inference_bundle(cfg, allow_mismatch)
        detector = build_detector(cfg.anonymize.detector)

        def anonymize_fn(photo):
            out, _ = anonymize_frame(photo, bundle, detector, cfg.anonymize)
            return out

    name = "passthrough" if passthrough else "prepared"
    report = evaluate_anonymizer(embedder, anonymize_fn, {name: dataset}, dataset)
    paths = reporting.write_eval_report(report, Path(cfg.out_dir) / "eval")
    print(report.to_text())
    print(f"report files: {paths['txt']}, {paths['csv']}, {paths['png']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faceveil",
                                     description="face anonymization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("prepare-data", help="reduce masks, crop, build pairs")
    common(p)
    p.add_argument("--force", action="store_true", help="overwrite prepared data")

    p = sub.add_parser("train", help="train all networks")
    common(p)
    p.add_argument("--resume", action="store_true", help="continue from the "
                   "latest checkpoint in the run directory")

    p = sub.add_parser("anonymize", help="anonymize an image, directory, or video")
    common(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--allow-config-mismatch", action="store_true")

    p = sub.add_parser("eval", help="embedding-distance evaluation report")
    common(p)
    p.add_argument("--passthrough", action="store_true",
                   help="evaluate the identity anonymizer as a baseline")
    p.add_argument("--allow-config-mismatch", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
        _seed_everything(cfg.seed)
        if args.command == "prepare-data":
            return cmd_prepare(cfg, args.force)
        if args.command == "train":
            return cmd_train(cfg, args.resume)
        if args.command == "anonymize":
            return cmd_anonymize(cfg, args.input, args.output,
                                 args.allow_config_mismatch)
        if args.command == "eval":
            return cmd_eval(cfg, args.passthrough, args.allow_config_mismatch)
        raise ConfigError(f"unknown command {args.command!r}")
    except DatasetError as exc:
        log.error("%s", exc)
        return EXIT_DATASET
    except (CheckpointError, EvaluationError) as exc:
        log.error("%s", exc)
        return EXIT_MODEL
    except MediaError as exc:
        log.error("%s", exc)
        return EXIT_MEDIA
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
