"""Command-line driver: extract / train / eval / bench.

Exit codes: 0 success, 2 usage or input errors, 3 artifact-format errors.
A `--config FILE` overlay (key=value lines, '#' comments) supplies
defaults; explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time

import numpy as np

from . import neural, pipeline
from .grid_complex import ImageTensor
from .persistence import diagram_for_image, export_diagram, filter_bars
from .vectorize import CurveConfig, vectorize_image

USAGE_ERROR = 2
FORMAT_ERROR = 3


def _parse_range(text: str) -> CurveConfig:
    if text == "auto":
        return ("auto", 0.0, 1.0)
    if text == "global":
        return ("global", 0.0, 1.0)
    m = re.fullmatch(r"([-+0-9.eE]+):([-+0-9.eE]+)", text)
    if not m:
        raise ValueError(f"--range must be auto, global, or LO:HI, got {text!r}")
    lo, hi = float(m.group(1)), float(m.group(2))
    if lo > hi:
        raise ValueError(f"--range lower bound {lo} exceeds upper bound {hi}")
    return ("fixed", lo, hi)


def _curve_config(args) -> CurveConfig:
    mode, lo, hi = _parse_range(args.range)
    return CurveConfig(n=args.curve_len, range_mode=mode, t_min=lo, t_max=hi)


def _load_samples(args, need_images: bool):
    """Resolve --synthetic / --data / --features into one sample list."""
    samples = None
    if args.synthetic is not None:
        samples = pipeline.generate_blob_dataset(args.synthetic, args.seed, side=args.side)
    elif args.data is not None:
        samples = pipeline.load_corpus(args.data, args.side)

    features = pipeline.read_feature_cache(args.features) if getattr(args, "features", None) else None
    if samples is None:
        if features is None:
            raise ValueError("no input: pass --data, --synthetic, or --features")
        if need_images:
            raise ValueError("this variant needs image data; pass --data or --synthetic")
        return features
    if features is not None:
        by_id = {s.id: s for s in features}
        for s in samples:
            if s.id in by_id:
                s.betti = by_id[s.id].betti
    return samples


def cmd_extract(args) -> int:
    config = _curve_config(args)
    samples = _load_samples(args, need_images=True)
    if any(s.image is None for s in samples):
        raise ValueError("extract needs images; --features alone is not enough")
    pipeline.extract_curves(samples, config, cache_dir=args.cache_dir)
    pipeline.write_feature_cache(args.out, samples)
    if args.emit_diagrams:
        from pathlib import Path

        out_dir = Path(args.emit_diagrams)
        out_dir.mkdir(parents=True, exist_ok=True)
        for s in samples:
            pd = filter_bars(diagram_for_image(s.image), args.min_persistence)
            name = s.id.replace("/", "_") + ".diagram.txt"
            (out_dir / name).write_text(export_diagram(pd), encoding="utf-8")
    print(f"wrote {len(samples)} feature rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    spec_probe = neural.build_network(args.variant, args.side, args.curve_len)
    samples = _load_samples(args, need_images=spec_probe.uses_image)
    if spec_probe.uses_curve and any(s.betti is None for s in samples) and any(
        s.image is None for s in samples
    ):
        raise ValueError(
            f"variant {args.variant!r} needs Betti curves; pass --features or image data"
        )
    train_config = neural.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        optimizer=args.optimizer,
        seed=args.seed,
        precision=args.precision,
    )
    metrics_path = args.metrics or (args.out + ".metrics.json")
    report, artifacts = pipeline.run_experiment(
        args.variant,
        samples,
        _curve_config(args),
        train_config,
        holdout_fraction=args.holdout,
        cache_dir=args.cache_dir,
        model_path=args.out,
        metrics_path=metrics_path,
    )
    print(json.dumps(report.to_dict(variant=args.variant, seed=args.seed), sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    spec, params = neural.load_model(args.model)
    ns = argparse.Namespace(
        synthetic=args.synthetic, data=args.data, features=args.features,
        seed=args.seed, side=spec.image_side,
    )
    samples = _load_samples(ns, need_images=spec.uses_image)
    if spec.uses_curve and any(s.betti is None for s in samples):
        if any(s.image is None for s in samples):
            raise ValueError("model needs Betti curves; pass --features or image data")
        pipeline.extract_curves(samples, CurveConfig(n=spec.curve_len))
    inputs = pipeline._assemble_inputs(spec, samples)
    preds = neural.predict(spec, params, inputs)
    report = pipeline.evaluate_metrics(preds, [s.label for s in samples])
    text = json.dumps(report.to_dict(variant=spec.variant), sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    if any(s <= 0 for s in sizes):
        raise ValueError("--sizes must be positive")
    rng = np.random.default_rng(args.seed)
    print(f"{'size':>6} {'mean_ips':>12} {'stddev':>10}")
    for size in sizes:
        images = [ImageTensor(rng.random((size, size))) for _ in range(args.images_per_rep)]
        config = CurveConfig(n=args.curve_len)
        vectorize_image(images[0], config)  # warm the jit before timing
        ips = []
        for _ in range(args.reps):
            start = time.perf_counter()
            for img in images:
                vectorize_image(img, config)
            elapsed = time.perf_counter() - start
            ips.append(len(images) / elapsed)
        print(f"{size:>6} {np.mean(ips):>12.2f} {np.std(ips):>10.2f}")
    return 0


def _apply_config_overlay(argv: list[str]) -> list[str]:
    """Turn --config FILE into leading flags so explicit flags win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ValueError("--config requires a file argument")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    overlay: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed config line {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            overlay += [f"--{key.replace('_', '-')}", value]
    # subcommand first, then overlay defaults, then explicit flags
    return rest[:1] + overlay + rest[1:]


def _add_common_input_flags(p):
    p.add_argument("--data", help="corpus directory with positive/ and negative/ subdirs")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="generate N blob images per class instead of reading a corpus")
    p.add_argument("--features", help="feature cache CSV from `extract`")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", type=int, default=64,
                   help="image side length after resize (synthetic default 64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdanet",
        description="Topological feature extraction and two-stream classification",
    )
    parser.add_argument("--config", metavar="FILE", help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute Betti-curve features for a corpus")
    _add_common_input_flags(p)
    p.add_argument("--out", required=True, help="output feature cache CSV")
    p.add_argument("--curve-len", type=int, default=100)
    p.add_argument("--range", default="auto", help="auto, global, or LO:HI")
    p.add_argument("--emit-diagrams", metavar="DIR",
                   help="also write per-sample persistence diagram text files")
    p.add_argument("--min-persistence", type=float, default=0.0,
                   help="drop bars at or below this persistence in emitted diagrams")
    p.add_argument("--cache-dir", help="on-disk curve cache directory")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one architecture variant")
    _add_common_input_flags(p)
    p.add_argument("--variant", required=True, choices=neural.VARIANTS)
    p.add_argument("--out", default="model.bin", help="model file path")
    p.add_argument("--metrics", help="metrics JSON path (default: <out>.metrics.json)")
    p.add_argument("--curve-len", type=int, default=100)
    p.add_argument("--range", default="auto")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--precision", choices=("single", "double"), default="single")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a corpus")
    _add_common_input_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write the metrics JSON here as well")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="filtration + diagram + curve throughput")
    p.add_argument("--sizes", default="64,128,256", help="comma-separated image sides")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--images-per-rep", type=int, default=10)
    p.add_argument("--curve-len", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_overlay(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except neural.ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FORMAT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
