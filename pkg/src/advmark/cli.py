"""Command-line shell.

Verbs: train-channel, train, embed, extract, evaluate, curve.
Exit codes: 0 success, 2 contract violation (bad arguments/configs/
checkpoint mismatches), 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from .attacks import AttackSpec
from .data import DatasetSpec, ingest
from .evaluation import PipelineModels, evaluate, render_report
from .metrics import psnr, rng_from_seed
from .pipeline import embed, extract, read_image
from .training import TrainConfig, load_decoder, load_encoder, train
from .types import BitMessage, ContractViolation


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed")


def cmd_train_channel(args) -> None:
    cfg = ch.ChannelConfig(
        source_len=args.source_len,
        code_len=args.code_len,
        hidden_widths=tuple(int(w) for w in args.hidden.split(",")),
        train_noise_max=args.noise_max,
        train_steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
    )
    model = ch.train_channel(cfg, rng_from_seed(args.seed))
    ch.save_channel(model, args.out)
    print(f"saved channel codec (D={cfg.source_len}, N={cfg.code_len}) to {args.out}")
    if args.curve_csv:
        rng = rng_from_seed(args.seed + 1)
        points = ch.robustness_curve(model, [0.0, 0.1, 0.2, 0.3, 0.4], args.trials, rng)
        ch.write_curve_csv(points, args.curve_csv, model, args.trials)
        for p, acc in points:
            print(f"noise={p:.2f} accuracy={acc:.4f}")


def cmd_curve(args) -> None:
    model = ch.load_channel(args.channel)
    grid = [float(x) for x in args.grid.split(",")]
    points = ch.robustness_curve(model, grid, args.trials, rng_from_seed(args.seed))
    ch.write_curve_csv(points, args.out, model, args.trials)
    for p, acc in points:
        print(f"noise={p:.2f} accuracy={acc:.4f}")


def _train_config(args) -> TrainConfig:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "mode": args.mode,
        "message_len": args.message_len,
        "max_steps": args.steps,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "seed": args.seed,
        "warm_start": args.warm_start,
        "distortion": args.distortion,
        "num_iter": args.num_iter,
        "checkpoint_every": args.checkpoint_every,
    }
    if args.distortions:
        overrides["distortions"] = tuple(args.distortions.split(","))
    if args.attack_kind:
        overrides["attack"] = AttackSpec(
            kind=args.attack_kind,
            widths=tuple(int(w) for w in args.attack_widths.split(",")),
            epsilon=args.attack_epsilon,
        )
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    return TrainConfig.from_dict(base)


def cmd_train(args) -> None:
    cfg = _train_config(args)
    dataset = ingest(
        DatasetSpec(
            root=args.data,
            target_size=args.image_size,
            eval_count=args.eval_count,
            split_seed=cfg.seed,
        )
    )
    result = train(cfg, dataset, out_dir=args.out)
    last = result.history[-1] if result.history else {}
    print(
        f"trained {cfg.mode} model for {cfg.max_steps} steps; "
        f"final bit_acc={last.get('bit_acc', float('nan')):.4f} "
        f"psnr={last.get('psnr', float('nan')):.2f} dB; checkpoints in {args.out}"
    )


def _parse_message(args, length: int) -> BitMessage:
    if args.hex:
        if length % 4 != 0:
            raise ContractViolation(
                f"--hex needs a message length divisible by 4, got {length}"
            )
        return BitMessage.from_hex(args.message, length)
    msg = BitMessage.from_string(args.message)
    if len(msg) != length:
        raise ContractViolation(f"message has {len(msg)} bits, expected {length}")
    return msg


def cmd_embed(args) -> None:
    codec = ch.load_channel(args.channel)
    encoder, _ = load_encoder(args.encoder)
    message = _parse_message(args, codec.source_len)
    stored = embed(codec, encoder, args.image, message, args.out)
    cover = read_image(args.image)
    print(f"wrote {args.out} (PSNR vs cover: {psnr(cover, stored):.2f} dB)")


def cmd_extract(args) -> None:
    codec = ch.load_channel(args.channel)
    decoder, _ = load_decoder(args.decoder)
    message = extract(codec, decoder, args.image)
    print(message.to_hex() if args.hex else message.to_string())


def cmd_evaluate(args) -> None:
    encoder, _ = load_encoder(args.encoder)
    decoder, _ = load_decoder(args.decoder)
    codec = ch.load_channel(args.channel) if args.channel else None
    models = PipelineModels(
        encoder=encoder, decoder=decoder, channel=codec, model_id=args.model_id
    )
    dataset = ingest(
        DatasetSpec(
            root=args.data,
            target_size=args.image_size,
            eval_count=args.eval_count,
            split_seed=args.seed,
        )
    )
    report = evaluate(models, dataset, suite=args.suite, rng=args.seed)
    json_path, csv_path = render_report(report, args.out)
    print(f"wrote {json_path} and {csv_path}")
    for row in report.rows:
        print(
            f"{row['key']:>22}  message={row['bit_acc_message']:.4f}  "
            f"code={row['bit_acc_code']:.4f}"
        )
    print(f"truncated message-level average: {report.metadata['truncated_avg_message']:.4f}")
    print(f"psnr rgb: {report.psnr['rgb']['mean']:.2f} dB")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advmark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-channel", help="train the bit-level channel codec")
    p.add_argument("--source-len", type=int, default=30)
    p.add_argument("--code-len", type=int, default=120)
    p.add_argument("--hidden", default="512,512")
    p.add_argument("--noise-max", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.add_argument("--curve-csv", default=None, help="also write a robustness curve CSV")
    p.add_argument("--trials", type=int, default=3000)
    _add_seed(p)
    p.set_defaults(func=cmd_train_channel)

    p = sub.add_parser("curve", help="robustness curve for a trained codec")
    p.add_argument("--channel", required=True)
    p.add_argument("--grid", default="0,0.1,0.2,0.3,0.4")
    p.add_argument("--trials", type=int, default=3000)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("train", help="train watermark networks")
    p.add_argument("--data", required=True, help="directory of cover images")
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.add_argument("--config", default=None, help="JSON file mirroring TrainConfig")
    p.add_argument("--mode", choices=["identity", "specialized", "combined", "adversarial"])
    p.add_argument("--message-len", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--num-iter", type=int, default=None)
    p.add_argument("--distortion", default=None, help="specialized mode, e.g. jpeg:50")
    p.add_argument("--distortions", default=None, help="combined mode, comma separated")
    p.add_argument("--attack-kind", default=None, choices=["conv", "residual", "capped"])
    p.add_argument("--attack-widths", default="3,16")
    p.add_argument("--attack-epsilon", type=float, default=None)
    p.add_argument("--warm-start", default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--eval-count", type=int, default=0)
    _add_seed(p)
    p.set_defaults(func=cmd_train, seed=None)

    p = sub.add_parser("embed", help="embed a message into an image")
    p.add_argument("--channel", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--hex", action="store_true", help="message is hex digits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover the message from an image")
    p.add_argument("--channel", required=True)
    p.add_argument("--decoder", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--hex", action="store_true", help="print hex digits")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="accuracy matrix over a distortion suite")
    p.add_argument("--encoder", required=True)
    p.add_argument("--decoder", required=True)
    p.add_argument("--channel", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--suite", choices=["known", "unknown", "both"], default="both")
    p.add_argument("--model-id", default="model")
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--eval-count", type=int, default=None)
    p.add_argument("--out", required=True, help="output path prefix")
    _add_seed(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command == "train":
        args.seed = 0
    try:
        args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
