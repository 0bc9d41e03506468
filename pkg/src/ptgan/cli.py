"""Command-line entry point: ``ptgan <subcommand> [options]``.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 configuration error.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import augmentation as aug
from .config import dump_config, load_config, validate_against_index, with_num_classes
from .errors import ConfigError, PtganError

log = logging.getLogger("ptgan")


def _common(p):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")  # fmt: skip
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="ptgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="render a synthetic stick-figure dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=4)
    p.add_argument("--images", type=int, default=4, help="images per identity")
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--seed", type=int, help="defaults to runtime.seed")

    p = sub.add_parser("pairs-build", help="list same-identity training pairs")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-distance", type=float, default=0.0)

    p = sub.add_parser("augment-preview", help="write a grid of augmentation examples")
    _common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, default=0, help="sample index for the random streams")

    p = sub.add_parser("train", help="train generator and discriminator")
    _common(p)
    p.add_argument("--manifest", help="defaults to paths.manifest")
    p.add_argument("--out", help="defaults to paths.out_dir")
    p.add_argument("--no-augment", action="store_true", help="ablation: no source augmentation")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("generate", help="synthesize one image in a target pose")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--pose", required=True, help="keypoint JSON of the target pose")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="SSIM and Inception Score over a manifest's pairs")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", help="defaults to paths.manifest")
    p.add_argument("--report", help="JSON report path (default: <out_dir>/report.json)")
    p.add_argument("--min-distance", type=float, default=0.0)
    return parser


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth_data(args, cfg):
    from .datasets import make_synthetic_dataset

    seed = cfg.runtime.seed if args.seed is None else args.seed
    ds = make_synthetic_dataset(args.identities, args.images, seed,
                                (args.height, args.width), out_dir=args.out)  # fmt: skip
    print(f"wrote {len(ds.index)} images of {ds.index.num_identities} identities "
          f"to {Path(args.out) / 'manifest.tsv'}")  # fmt: skip


def cmd_pairs_build(args, cfg):
    from .datasets import build_pairs, load_manifest, write_pairs

    pairs = build_pairs(load_manifest(args.manifest), args.min_distance)
    write_pairs(args.out, pairs)
    print(f"{len(pairs)} pairs -> {args.out}")


def preview_panels(img, cfg, index=0):
    """Original plus one forced example of each technique."""
    base = aug.resize_and_pad(img, (cfg.image_size, cfg.image_size))

    def rng(name):
        return aug.rng_stream(cfg.seed, index, name)

    forced = dataclasses.replace
    lo_crop = min(cfg.crop_scale_range[0], 0.8)
    strength = max(cfg.jitter_brightness, cfg.jitter_contrast, cfg.jitter_saturation, 0.2)
    return [
        ("original", base),
        ("erase", aug.random_erase(base, rng("erase"), forced(cfg, erase_prob=1.0))),
        ("crop", aug.random_crop_upscale(base, rng("crop"),
                                         forced(cfg, crop_scale_range=(lo_crop, lo_crop)))),
        ("distort", aug.random_distortion(base, rng("distort"), cfg)),
        ("brightness", aug.adjust_brightness(base, 1.0 + strength)),
        ("contrast", aug.adjust_contrast(base, 1.0 + strength)),
        ("saturation", aug.adjust_hue_saturation(base, 0.0, 1.0 + 2 * strength)),
        ("flip", aug.horizontal_flip(base, rng("flip"), forced(cfg, flip_prob=1.0))),
    ]  # fmt: skip


def cmd_augment_preview(args, cfg):
    from .imageio import read_image, write_image

    panels = preview_panels(read_image(args.image), cfg.augment, args.index)
    size = cfg.augment.image_size
    gap = 4
    rows, cols = 2, 4
    grid = np.ones((rows * size + (rows - 1) * gap, cols * size + (cols - 1) * gap, 3), np.float32)
    for k, (_, img) in enumerate(panels):
        r, c = divmod(k, cols)
        grid[r * (size + gap) : r * (size + gap) + size, c * (size + gap) : c * (size + gap) + size] = img
    write_image(args.out, grid)
    print(f"preview ({', '.join(n for n, _ in panels)}) -> {args.out}")


def _manifest_path(args, cfg):
    path = args.manifest or cfg.paths.manifest
    if not path:
        raise ConfigError("no manifest given (--manifest or paths.manifest)", "paths.manifest")
    return path


def cmd_train(args, cfg):
    from .backbone import build_backbone
    from .datasets import build_pairs, load_manifest
    from .trainer import fit, init_state, load_state, write_history_csv

    index = load_manifest(_manifest_path(args, cfg))
    if "discriminator.num_classes" not in cfg.explicit:
        cfg = with_num_classes(cfg, max(2, index.num_identities))
    validate_against_index(cfg, index)
    if args.no_augment:
        cfg = dataclasses.replace(cfg, trainer=dataclasses.replace(cfg.trainer, augment=False))
    out = Path(args.out or cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))

    pairs = build_pairs(index)
    backbone = build_backbone(cfg.backbone)
    if args.resume:
        state = load_state(args.resume)
        # the run length may be extended on resume; everything else comes from the checkpoint
        state.trainer_cfg = dataclasses.replace(state.trainer_cfg, epochs=cfg.trainer.epochs,
                                                max_steps=cfg.trainer.max_steps)  # fmt: skip
    else:
        state = init_state(cfg.generator, cfg.discriminator, cfg.trainer, extra=cfg.to_dict())
    augmenter = aug.compose_pipeline(cfg.augment, enabled=state.trainer_cfg.augment)
    log.info("training on %d pairs (%d identities), augmentation %s",
             len(pairs), index.num_identities, "on" if cfg.trainer.augment else "off")  # fmt: skip
    state = fit(pairs, backbone, state, augmenter, out_dir=out, workers=cfg.runtime.workers)
    write_history_csv(out / "history.csv", state.history)
    last = state.history[-1] if state.history else {}
    print(f"trained {state.step} steps over {state.epoch} epochs -> {out}")
    if last:
        print("last step: " + ", ".join(f"{k}={v:.4g}" for k, v in last.items()))


def cmd_generate(args, cfg):
    from .augmentation import resize_and_pad
    from .backbone import BackboneConfig, build_backbone
    from .generator import generate
    from .imageio import read_image, to_network, to_storage, write_image
    from .pose_codec import load_keypoints, normalize_pose, pose_condition
    from .trainer import config_from_dict, load_generator

    gen, meta = load_generator(args.checkpoint)
    run = meta.get("extra", {})
    backbone = build_backbone(config_from_dict(BackboneConfig, run.get("backbone", {})))
    size = gen.cfg.output_size
    src = resize_and_pad(read_image(args.image), (size, size))
    d = backbone.extract(to_network(src)[None])[0]
    include_conf = meta["configs"]["trainer"].get("pose_include_confidence", True)
    pose = pose_condition(normalize_pose(load_keypoints(args.pose)), include_conf)
    write_image(args.out, to_storage(generate(d, pose, gen)))
    print(f"{size}x{size} image -> {args.out}")


def cmd_evaluate(args, cfg):
    from .datasets import build_pairs, load_manifest
    from .metrics import evaluate

    index = load_manifest(_manifest_path(args, cfg))
    pairs = build_pairs(index, args.min_distance)
    if not pairs:
        raise PtganError("manifest yields no evaluation pairs")
    report = evaluate(pairs, args.checkpoint, cfg.metrics)
    report.config["manifest"] = str(_manifest_path(args, cfg))
    path = Path(args.report or Path(cfg.paths.out_dir) / "report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json())
    print(report.table())
    print(f"report -> {path}")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "pairs-build": cmd_pairs_build,
    "augment-preview": cmd_augment_preview,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")  # fmt: skip
    try:
        cfg = load_config(args.config, args.overrides)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (PtganError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
