"""Command line front end: train, translate, eval, reconstruct.

Exit codes: 0 success, 1 usage error, 2 runtime/data error. All file outputs
go through atomic temp-then-rename writes. The TEXT2SIGN_DATA_DIR environment
variable redirects the default corpus/LUT lookups to a custom directory.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .corpus import default_corpus_path, load_corpus
from .errors import PipelineError
from .motion import compile_plan, default_lut_path, load_lut, save_simulation_csv, simulate_execution
from .seq2seq import TrainingConfig, evaluate, load_model, save_loss_csv, save_model, train, translate
from .skeleton import (
    LimbCalibration,
    PipelineConfig,
    calibrate_limbs,
    load_depth_dir,
    load_keypoint_frames,
    reconstruct_stream,
    save_skeleton_stream,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this tool reserves 2 for
    # runtime errors and reports usage problems as 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _data_file(name: str, packaged: Path) -> Path:
    override = os.environ.get("TEXT2SIGN_DATA_DIR")
    if override:
        candidate = Path(override) / name
        if candidate.exists():
            return candidate
    return packaged


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="text2sign",
                     description="Spanish text to simulated robot sign language")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the translator")
    p_train.add_argument("--corpus", type=Path,
                         default=_data_file("lse_corpus.tsv", default_corpus_path()))
    p_train.add_argument("--model", type=Path, default=Path("model.npz"),
                         help="checkpoint output path")
    p_train.add_argument("--history", type=Path, default=Path("loss_history.csv"),
                         help="per-epoch loss CSV output path")
    p_train.add_argument("--lr", type=_positive_float, default=1e-4)
    p_train.add_argument("--epochs", type=_positive_int, default=100)
    p_train.add_argument("--beta", type=_positive_float, default=0.9,
                         help="RMSprop decay")
    p_train.add_argument("--val-fraction", type=float, default=0.2)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--hidden", type=_positive_int, default=256)
    p_train.add_argument("--max-decode-len", type=_positive_int, default=12)
    p_train.add_argument("--plot", type=Path, default=None,
                         help="also write a loss-curve image (PNG)")

    p_tr = sub.add_parser("translate", help="translate sentences with a trained model")
    p_tr.add_argument("--model", type=Path, required=True)
    p_tr.add_argument("--text", action="append", default=None,
                      help="sentence to translate (repeatable)")
    p_tr.add_argument("--plan", action="store_true",
                      help="compile the glosses into an execution plan and simulate it")
    p_tr.add_argument("--lut", type=Path,
                      default=_data_file("demo_motion_lut.txt", default_lut_path()))
    p_tr.add_argument("--log", type=Path, default=Path("simulation_log.csv"),
                      help="simulation log output (with --plan)")
    p_tr.add_argument("--rate", type=_positive_float, default=50.0,
                      help="simulation sample rate in Hz")

    p_eval = sub.add_parser("eval", help="score a model against a corpus")
    p_eval.add_argument("--model", type=Path, required=True)
    p_eval.add_argument("--corpus", type=Path,
                        default=_data_file("lse_corpus.tsv", default_corpus_path()))
    p_eval.add_argument("--table", action="store_true",
                        help="also print per-pair predictions")

    p_rec = sub.add_parser("reconstruct", help="3D skeletons from keypoints + depth")
    p_rec.add_argument("--keypoints", type=Path, required=True,
                       help="keypoint frames file (frame part u v confidence)")
    p_rec.add_argument("--depth", type=Path, required=True,
                       help="directory of 16-bit .pgm depth frames")
    p_rec.add_argument("--output", type=Path, required=True)
    p_rec.add_argument("--calibration", type=Path, default=None,
                       help="limb calibration file to use for occlusion resolution")
    p_rec.add_argument("--calibrate", action="store_true",
                       help="measure limb lengths from clean frames and write them to --output")
    p_rec.add_argument("--dilation-radius", type=int, default=3)
    p_rec.add_argument("--median-order", type=_positive_int, default=5)
    p_rec.add_argument("--occlusion-threshold", type=_positive_float, default=8.0)
    p_rec.add_argument("--min-calibration-frames", type=_positive_int, default=10)
    return parser


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    config = TrainingConfig(learning_rate=args.lr, epochs=args.epochs,
                            rmsprop_beta=args.beta, val_fraction=args.val_fraction,
                            seed=args.seed, n_hidden=args.hidden,
                            max_decode_len=args.max_decode_len)
    start = time.perf_counter()
    model, history = train(corpus, config)
    elapsed = time.perf_counter() - start
    save_model(model, args.model)
    save_loss_csv(history, args.history)
    final_val = f", val {history.val[-1]:.4f}" if history.val else ""
    print(f"trained {config.epochs} epochs on {len(corpus)} pairs in {elapsed:.1f}s")
    print(f"final loss: train {history.train[-1]:.4f}{final_val}")
    print(f"checkpoint: {args.model}")
    print(f"history: {args.history}")
    if args.plot is not None:
        _plot_history(history, args.plot)
        print(f"plot: {args.plot}")
    return 0


def _plot_history(history, path: Path) -> None:
    import io

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .io_utils import atomic_write_bytes

    epochs = range(1, len(history.train) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, history.train, label="training loss")
    if history.val:
        ax.plot(epochs, history.val, label="validation loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy per token")
    ax.legend()
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format=path.suffix.lstrip(".") or "png")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def cmd_translate(args) -> int:
    model = load_model(args.model)
    texts = args.text if args.text is not None else []
    all_glosses: list[str] = []
    for text in texts:
        glosses = translate(model, text) if text.strip() else []
        all_glosses.extend(glosses)
        print(" ".join(glosses))
    if args.plan:
        lut = load_lut(args.lut)
        plan = compile_plan(all_glosses, lut)
        log = simulate_execution(plan, args.rate, lut.limits)
        save_simulation_csv(log, args.log)
        print(f"plan: {len(plan.segments)} signs, {plan.total_duration:.2f}s signing time")
        print(f"simulation log: {args.log}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    corpus = load_corpus(args.corpus)
    if args.table:
        for pair in corpus:
            print(f"{pair.source}\t{' '.join(translate(model, pair.source))}")
    metrics = evaluate(model, corpus)
    print(f"pairs: {metrics.n_pairs}")
    print(f"exact_match: {metrics.exact_match_rate:.4f}")
    print(f"token_accuracy: {metrics.token_accuracy:.4f}")
    return 0


def cmd_reconstruct(args) -> int:
    keypoint_frames = load_keypoint_frames(args.keypoints)
    depth_frames, intrinsics = load_depth_dir(args.depth)
    config = PipelineConfig(dilation_radius=args.dilation_radius,
                            median_order=args.median_order,
                            occlusion_threshold_px=args.occlusion_threshold)
    if args.calibrate:
        skeletons, stats = reconstruct_stream(keypoint_frames, depth_frames,
                                              intrinsics, None, config)
        calib = calibrate_limbs(skeletons, config.limbs,
                                min_frames=args.min_calibration_frames)
        calib.save(args.output)
        print(f"frames: {stats.frames}")
        print(f"calibrated limbs: {len(calib.lengths)}")
        print(f"calibration: {args.output}")
        return 0
    calib = LimbCalibration.load(args.calibration) if args.calibration else None
    skeletons, stats = reconstruct_stream(keypoint_frames, depth_frames,
                                          intrinsics, calib, config)
    save_skeleton_stream(args.output, skeletons)
    print(f"frames: {stats.frames}")
    print(f"keypoints projected: {stats.keypoints_projected}")
    print(f"occlusion groups: {stats.occlusion_groups} "
          f"({stats.unresolved_groups} unresolved)")
    print(f"output: {args.output}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "translate": cmd_translate,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (PipelineError, OSError, ValueError) as exc:
        print(f"text2sign: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
