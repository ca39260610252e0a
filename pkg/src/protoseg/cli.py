"""Command-line entry point: gen-data, train, eval, predict, ablate."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pnm
from .config import load_config
from .episodes import Episode, SplitConfig, SyntheticSpec, fold_classes, load_pool, save_pool, synthetic_pool
from .errors import ConfigError, IoError, ProtosegError
from .evaluation import STANDARD_ARMS, ablate, ablation_table, evaluate
from .model import ModelConfig, TrainConfig, episode_forward, load_model, train

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4


def _model_config(cfg):
    return ModelConfig(
        levels=cfg.levels,
        prototypes=cfg.prototypes,
        head_width=cfg.head_width,
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        batch=cfg.batch,
        seed=cfg.seed,
    )


def _train_config(cfg):
    return TrainConfig(
        iterations=cfg.iterations,
        k_shot=cfg.k_shot,
        sample_k=cfg.sample_k,
        log_every=cfg.log_every,
        snapshot_every=cfg.snapshot_every,
        lr_drop_at=cfg.lr_drop_at,
        lr_drop_factor=cfg.lr_drop_factor,
        flip_augment=cfg.flip_augment,
        rotate_augment=cfg.rotate_augment,
        color_augment=cfg.color_augment,
        freeze_backbone=cfg.freeze_backbone,
    )


def _splits(cfg):
    common = dict(num_classes=cfg.num_classes, num_folds=cfg.num_folds, fold_index=cfg.fold)
    train_ids = fold_classes(SplitConfig(role="train", **common))
    test_ids = fold_classes(SplitConfig(role="test", **common))
    return train_ids, test_ids


def _load_data(cfg):
    if not cfg.data:
        raise ConfigError("no dataset path given (set --data or the `data` config key)")
    return load_pool(cfg.data)


def cmd_gen_data(cfg):
    if not cfg.out:
        raise ConfigError("gen-data needs --out")
    spec = SyntheticSpec(image_size=cfg.image_size, distractors=cfg.distractors, seed=cfg.seed)
    pool = synthetic_pool(spec, range(1, cfg.num_classes + 1), cfg.per_class)
    save_pool(cfg.out, pool)
    print(f"wrote {len(pool)} image/mask pairs to {cfg.out}")
    return 0


def cmd_train(cfg):
    pool = _load_data(cfg)
    train_ids, _ = _splits(cfg)
    out = cfg.out or "run"
    train(pool, train_ids, _model_config(cfg), _train_config(cfg), out_dir=out,
          resume=cfg.checkpoint or None)
    print(f"checkpoint written to {Path(out) / 'checkpoint'}")
    return 0


def cmd_eval(cfg):
    if not cfg.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    pool = _load_data(cfg)
    train_ids, test_ids = _splits(cfg)
    params, _, _ = load_model(cfg.checkpoint)
    report = evaluate(params, pool, test_ids, k=cfg.k_shot, episodes=cfg.episodes,
                      seed=cfg.seed, train_classes=train_ids)
    print(report.as_text())
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "eval_report.csv").write_text(report.as_csv())
    return 0


def cmd_predict(cfg, support_pairs, query_path):
    if not cfg.checkpoint:
        raise ConfigError("predict needs --checkpoint")
    if not cfg.out:
        raise ConfigError("predict needs --out")
    params, _, _ = load_model(cfg.checkpoint)
    support = []
    for img_path, mask_path in support_pairs:
        img = np.transpose(pnm.read_ppm(img_path), (2, 0, 1))
        mask = (pnm.read_pgm(mask_path) >= 128).astype(np.float64)
        support.append((img, mask))
    query = np.transpose(pnm.read_ppm(query_path), (2, 0, 1))
    ep = Episode(support=support, query_image=query,
                 query_mask=np.zeros(query.shape[1:]), class_id=0)
    _, mask, _, guidance = episode_forward(params, ep)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pnm.write_pgm(out / "prediction.pgm", pnm.mask_to_gray(mask))
    pnm.write_pgm(out / "prior_fg.pgm", pnm.prior_to_gray(guidance.prior.foreground_prior))
    pnm.write_pgm(out / "prior_bg.pgm", pnm.prior_to_gray(guidance.prior.background_prior))
    print(f"wrote prediction and prior maps to {out}")
    return 0


def cmd_ablate(cfg, arms):
    pool = _load_data(cfg)
    train_ids, test_ids = _splits(cfg)
    reports = ablate(pool, train_ids, test_ids, _model_config(cfg), _train_config(cfg),
                     arms=arms, k=cfg.k_shot, episodes=cfg.episodes, eval_seed=cfg.seed)
    print(ablation_table(reports))
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        rows = ["arm,miou"] + [f"{arm},{rep.miou:.6f}" for arm, rep in reports.items()]
        (Path(cfg.out) / "ablation.csv").write_text("\n".join(rows) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="protoseg",
                                     description="Few-shot segmentation with dual prior masks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", dest="config_path", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--fold", type=int)
        p.add_argument("--k", dest="k_shot", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--checkpoint", metavar="PATH")
        p.add_argument("--episodes", type=int)
        p.add_argument("--data", metavar="DIR")
        p.add_argument("--iterations", type=int)

    for name in ("gen-data", "train", "eval", "ablate"):
        common(sub.add_parser(name))
    p_pred = sub.add_parser("predict")
    common(p_pred)
    p_pred.add_argument("--support", nargs=2, metavar=("IMAGE", "MASK"),
                        action="append", required=True)
    p_pred.add_argument("--query", required=True)
    sub.choices["ablate"].add_argument("--arms", default=",".join(STANDARD_ARMS))
    for name in ("train", "ablate"):
        sub.choices[name].add_argument("--lr-drop-at", dest="lr_drop_at", type=int)
        sub.choices[name].add_argument("--lr-drop-factor", dest="lr_drop_factor", type=float)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k, None)
        for k in ("seed", "fold", "k_shot", "out", "checkpoint", "episodes", "data",
                  "iterations", "lr_drop_at", "lr_drop_factor")
    }
    try:
        cfg = load_config(args.config_path, overrides)
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.support, args.query)
        if args.command == "ablate":
            return cmd_ablate(cfg, [a.strip() for a in args.arms.split(",") if a.strip()])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProtosegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
