"""Command-line entry point: pretrain, finetune, compress, decompress, eval, plot."""

import argparse
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_CHECKPOINT = 4
EXIT_BAD_BITSTREAM = 5
EXIT_BAD_DATASET = 6

_EXIT_DOC = """\
exit codes:
  0  success
  1  unexpected internal error
  2  usage error (unknown flags, missing arguments)
  3  input file or directory not found
  4  unreadable checkpoint or checkpoint/config mismatch
  5  invalid or truncated bitstream
  6  dataset problems (no usable images, images too small)
"""


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("-d", "--data", required=True, help="directory of training images")
    p.add_argument("-o", "--out", required=True, help="output directory for checkpoints/logs")
    p.add_argument("--config", help="TrainConfig JSON file (flags below override it)")
    p.add_argument("--seed", type=int, help="seed fixing crops, noise and init")
    p.add_argument("--scale", choices=("toy", "full"), default="toy")
    p.add_argument("--rate-preset", choices=("q075", "q150", "q300"),
                   help="rate target preset (sets target bpp and pretrain lambda)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--crop-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poel",
        description="Perception-oriented learned image codec",
        epilog=_EXIT_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("pretrain", help="MSE rate-distortion pretraining",
                         epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_train_flags(pre)

    fin = sub.add_parser("finetune", help="perceptual finetuning from a pretrained checkpoint",
                         epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_train_flags(fin)
    fin.add_argument("--init", required=True, help="pretrained checkpoint to start from")

    com = sub.add_parser("compress", help="encode an image into a .poel bitstream",
                         epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    com.add_argument("-i", "--input", required=True)
    com.add_argument("-o", "--output", required=True)
    com.add_argument("-m", "--model", required=True, help="checkpoint file")

    dec = sub.add_parser("decompress", help="decode a .poel bitstream into an image",
                         epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    dec.add_argument("-i", "--input", required=True)
    dec.add_argument("-o", "--output", required=True)
    dec.add_argument("-m", "--model", required=True, help="checkpoint file")

    ev = sub.add_parser("eval", help="compress/decompress a directory and report metrics",
                        epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    ev.add_argument("-d", "--data", required=True)
    ev.add_argument("-m", "--model", required=True, help="checkpoint file")
    ev.add_argument("-o", "--output", required=True, help="report CSV path")

    pl = sub.add_parser("plot", help="aggregate report CSVs into RD-curve data",
                        epilog=_EXIT_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    pl.add_argument("-i", "--input", action="append", required=True,
                    help="report CSV (repeatable)")
    pl.add_argument("-o", "--output", required=True, help="RD data CSV path")
    return parser


def _train_config(args):
    from .config import PRETRAIN_LAMBDA, RATE_PRESETS, TrainConfig

    if args.config:
        if not Path(args.config).is_file():
            raise FileNotFoundError(f"config file {args.config} not found")
        cfg = TrainConfig.from_file(args.config)
    else:
        cfg = TrainConfig()
    cfg.phase = "perceptual_finetune" if args.command == "finetune" else "mse_pretrain"
    if args.rate_preset:
        cfg.rate_target = RATE_PRESETS[args.rate_preset]
        cfg.mse_lambda = PRETRAIN_LAMBDA[args.rate_preset]
    for flag, attr in (("seed", "seed"), ("epochs", "epochs"),
                       ("steps_per_epoch", "steps_per_epoch"), ("batch_size", "batch_size"),
                       ("lr", "base_lr"), ("crop_size", "crop_size")):
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, attr, value)
    return cfg


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{path} not found")


def _run(args) -> int:
    if args.command in ("pretrain", "finetune"):
        from .config import CodecConfig
        from .training import run_training

        cfg = _train_config(args)
        init = getattr(args, "init", None)
        if init is not None:
            _require_file(init)
        final = run_training(cfg, args.data, args.out,
                             codec_cfg=CodecConfig.from_scale(args.scale),
                             init_checkpoint=init)
        print(final)
        return EXIT_OK

    if args.command == "compress":
        import torch

        from .checkpoint import load_model
        from .codec import compress_image
        from .eval_io import load_image

        _require_file(args.input)
        _require_file(args.model)
        model = load_model(args.model)
        with torch.no_grad():
            bs = compress_image(load_image(args.input), model)
        Path(args.output).write_bytes(bs.to_bytes())
        print(f"{args.output}: {bs.stats.measured_bits // 8} bytes, {bs.stats.bpp:.4f} bpp")
        return EXIT_OK

    if args.command == "decompress":
        from .checkpoint import load_model
        from .codec import decompress_image
        from .eval_io import save_image

        _require_file(args.input)
        _require_file(args.model)
        model = load_model(args.model)
        x_hat = decompress_image(Path(args.input).read_bytes(), model)
        save_image(x_hat, args.output)
        print(args.output)
        return EXIT_OK

    if args.command == "eval":
        from .checkpoint import load_model
        from .eval_io import evaluate_model

        _require_file(args.model)
        model = load_model(args.model)
        rows = evaluate_model(model, args.data, out_csv=args.output)
        mean = rows[-1]
        print(f"{len(rows) - 1} images: bpp={mean['bpp']:.4f} psnr={mean['psnr_db']:.2f} "
              f"ms_ssim={mean['ms_ssim']:.4f} lpips={mean['lpips']:.4f}")
        return EXIT_OK

    if args.command == "plot":
        from .eval_io import rd_plot_data, write_report_csv

        for path in args.input:
            _require_file(path)
        points = rd_plot_data(args.input)
        write_report_csv(points, args.output)
        print(f"{args.output}: {len(points)} points")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .checkpoint import CheckpointError
    from .codec import BitstreamFormatError
    from .rangecoder import CorruptStreamError, TruncatedStreamError

    try:
        return _run(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CHECKPOINT
    except (BitstreamFormatError, TruncatedStreamError, CorruptStreamError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_BITSTREAM
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_DATASET
    except Exception as e:  # noqa: BLE001 - map anything else to a stable code
        print(f"unexpected error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
