"""Dataset ingestion, synthetic data, experiment orchestration, metrics.

A corpus is either a directory with positive/ and negative/ image
subdirectories or the built-in blob generator. Curves are cached on disk
keyed by (image hash, curve config); cache writes are atomic.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import neural
from .grid_complex import ImageTensor
from .vectorize import BettiCurve, CurveConfig, vectorize_image

__all__ = [
    "Sample",
    "EvalReport",
    "load_image",
    "load_corpus",
    "split_dataset",
    "generate_blob_dataset",
    "evaluate_metrics",
    "extract_curves",
    "run_experiment",
    "write_feature_cache",
    "read_feature_cache",
]

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff")


@dataclass
class Sample:
    """One labeled image, with its Betti curve once extracted.

    label 0 = negative, 1 = positive.
    """

    id: str
    image: ImageTensor | None
    label: int
    betti: BettiCurve | None = None


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts and the five headline metrics.

    Ratios with a zero denominator are reported as 0.0 and named in
    `flags` so reports stay machine-comparable.
    """

    tn: int
    fp: int
    fn: int
    tp: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    tnr: float
    flags: tuple[str, ...] = ()

    def to_dict(self, variant: str | None = None, seed: int | None = None) -> dict:
        d = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tnr": self.tnr,
            "confusion": {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp},
            "flags": list(self.flags),
        }
        if variant is not None:
            d["variant"] = variant
        if seed is not None:
            d["seed"] = seed
        return d


def load_image(path, side: int) -> ImageTensor:
    """Decode, convert to grayscale, bilinearly resize to side x side,
    scale intensities to [0, 1]."""
    try:
        with Image.open(path) as img:
            gray = img.convert("L")
            resized = gray.resize((side, side), Image.BILINEAR)
            arr = np.asarray(resized, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return ImageTensor(arr)


def load_corpus(root, side: int) -> list[Sample]:
    """Load a positive/ + negative/ directory tree, sorted for determinism."""
    root = Path(root)
    samples: list[Sample] = []
    for label, sub in ((0, "negative"), (1, "positive")):
        folder = root / sub
        if not folder.is_dir():
            raise OSError(f"corpus directory {root} is missing {sub}/")
        for path in sorted(folder.iterdir()):
            if path.suffix.lower() in IMAGE_EXTENSIONS:
                samples.append(Sample(id=f"{sub}/{path.name}", image=load_image(path, side), label=label))
    if not samples:
        raise OSError(f"corpus directory {root} contains no images")
    return samples


def split_dataset(samples: list[Sample], holdout_fraction: float, seed: int):
    """Stratified split: each class contributes ceil(fraction * size) to
    the holdout, shuffled by one seeded generator.

    Ceiling keeps a nominal 20% fraction of a 287-per-class corpus at 58
    holdout samples per class.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    by_class = {0: [], 1: []}
    for s in samples:
        by_class[s.label].append(s)
    if not by_class[0] or not by_class[1]:
        raise ValueError("both classes must be present to split")
    rng = np.random.default_rng(seed)
    train: list[Sample] = []
    holdout: list[Sample] = []
    for label in (0, 1):
        group = by_class[label]
        k = int(np.ceil(holdout_fraction * len(group)))
        if k == 0 or k == len(group):
            raise ValueError(
                f"holdout_fraction {holdout_fraction} leaves an empty split for class {label}"
            )
        order = rng.permutation(len(group))
        holdout += [group[i] for i in order[:k]]
        train += [group[i] for i in order[k:]]
    return train, holdout


def generate_blob_dataset(count_per_class: int, seed: int, side: int = 64,
                          noise: float = 0.03) -> list[Sample]:
    """Dark Gaussian blobs on a bright noisy background.

    Class 0 images carry 1-3 blobs, class 1 carries 6-8; blob centers sit
    in jittered cells of a 4x4 grid so they stay >= 2 radii apart.
    """
    if count_per_class < 1:
        raise ValueError("count_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    cell = side // 4
    radius = cell // 3
    jitter = max(cell // 2 - radius, 0)
    yy, xx = np.mgrid[0:side, 0:side]
    samples: list[Sample] = []
    for label, counts in ((0, (1, 2, 3)), (1, (6, 7, 8))):
        for i in range(count_per_class):
            k = int(rng.choice(counts))
            cells = rng.choice(16, size=k, replace=False)
            img = 0.9 + noise * rng.standard_normal((side, side))
            for c in cells:
                cy = (c // 4) * cell + cell // 2 + rng.integers(-jitter, jitter + 1)
                cx = (c % 4) * cell + cell // 2 + rng.integers(-jitter, jitter + 1)
                bump = 0.7 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (radius / 1.5) ** 2))
                img = img - bump
            samples.append(
                Sample(id=f"blob-{label}-{i:04d}", image=ImageTensor(np.clip(img, 0.0, 1.0)),
                       label=label)
            )
    return samples


def evaluate_metrics(predictions, labels) -> EvalReport:
    """Confusion matrix and Table-style metrics; class 1 is positive."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size != labels.size:
        raise ValueError(
            f"length mismatch: {predictions.size} predictions vs {labels.size} labels"
        )
    if predictions.size == 0:
        raise ValueError("cannot evaluate empty sequences")
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(f"{name}_undefined")
            return 0.0
        return num / den

    accuracy = (tp + tn) / (tp + tn + fp + fn)
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    tnr = ratio(tn, tn + fp, "tnr")
    return EvalReport(tn, fp, fn, tp, accuracy, precision, recall, f1, tnr, tuple(flags))


# --- curve extraction with on-disk cache -----------------------------------

def _cache_key(image: ImageTensor, config: CurveConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(image.values).tobytes())
    h.update(repr(config).encode())
    return h.hexdigest()


def extract_curves(samples: list[Sample], config: CurveConfig,
                   cache_dir=None) -> None:
    """Fill each sample's betti field in place.

    In global range mode the dataset-wide [min, max] is resolved first so
    all curves share one threshold grid.
    """
    if config.range_mode == "global":
        t_min = min(float(s.image.values.min()) for s in samples)
        t_max = max(float(s.image.values.max()) for s in samples)
        config = CurveConfig(config.n, "fixed", t_min, t_max, config.normalize)
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)
    for s in samples:
        if cache:
            entry = cache / (_cache_key(s.image, config) + ".npy")
            if entry.exists():
                data = np.load(entry)
                s.betti = BettiCurve(data[2:], float(data[0]), float(data[1]))
                continue
        s.betti = vectorize_image(s.image, config)
        if cache:
            payload = np.concatenate(([s.betti.t_min, s.betti.t_max], s.betti.samples))
            fd, tmp = tempfile.mkstemp(dir=cache, suffix=".npy.tmp")
            with os.fdopen(fd, "wb") as fh:
                np.save(fh, payload)
            os.replace(tmp, entry)


def write_feature_cache(path, samples: list[Sample]) -> None:
    """CSV with header id,label,b0,...,b{n-1}; UTF-8, LF line endings."""
    n = samples[0].betti.n
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,label," + ",".join(f"b{i}" for i in range(n)) + "\n")
        for s in samples:
            row = ",".join(repr(float(x)) for x in s.betti.samples)
            fh.write(f"{s.id},{s.label},{row}\n")


def read_feature_cache(path) -> list[Sample]:
    """Samples with curves but no images; t_min/t_max are not stored."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["id", "label"]:
            raise ValueError(f"{path}: not a feature cache file")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            curve = np.array([float(x) for x in parts[2:]])
            samples.append(
                Sample(id=parts[0], image=None, label=int(parts[1]),
                       betti=BettiCurve(curve, 0.0, 1.0))
            )
    if not samples:
        raise ValueError(f"{path}: feature cache is empty")
    return samples


# --- experiment orchestration ----------------------------------------------

def _assemble_inputs(spec: neural.NetworkSpec, samples: list[Sample]) -> dict:
    inputs = {}
    if spec.uses_image:
        if any(s.image is None for s in samples):
            raise ValueError(f"variant {spec.variant!r} needs images, but some samples have none")
        inputs["image"] = np.stack([s.image.values for s in samples])
    if spec.uses_curve:
        if any(s.betti is None for s in samples):
            raise ValueError(f"variant {spec.variant!r} needs Betti curves; extract them first")
        inputs["betti"] = np.stack([s.betti.samples for s in samples])
    return inputs


def run_experiment(variant: str, samples: list[Sample], curve_config: CurveConfig,
                   train_config: neural.TrainConfig, out_dir=None,
                   holdout_fraction: float = 0.2, cache_dir=None,
                   model_path=None, metrics_path=None):
    """Extract, split, train, evaluate; write the model and metrics files.

    Artifact paths default to model.bin / metrics.json under out_dir.
    Fully reproducible from (samples, seeds, configs). Partial artifacts
    are removed if any stage fails.
    """
    if model_path is None or metrics_path is None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        model_path = model_path or out / "model.bin"
        metrics_path = metrics_path or out / "metrics.json"
    model_path, metrics_path = Path(model_path), Path(metrics_path)
    try:
        image_side = samples[0].image.height if samples[0].image is not None else 0
        curve_len = curve_config.n
        spec = neural.build_network(variant, image_side or 16, curve_len)
        if spec.uses_curve and any(s.betti is None for s in samples):
            extract_curves(samples, curve_config, cache_dir=cache_dir)
        train_set, holdout = split_dataset(samples, holdout_fraction, train_config.seed)
        params, history = neural.train(
            spec, (_assemble_inputs(spec, train_set), np.array([s.label for s in train_set])),
            train_config,
        )
        preds = neural.predict(spec, params, _assemble_inputs(spec, holdout))
        report = evaluate_metrics(preds, [s.label for s in holdout])
        neural.save_model(model_path, spec, params)
        metrics_path.write_text(
            json.dumps(report.to_dict(variant=variant, seed=train_config.seed), sort_keys=True)
            + "\n",
            encoding="utf-8",
        )
        return report, {"model": model_path, "metrics": metrics_path, "loss_history": history}
    except Exception:
        for p in (model_path, metrics_path):
            if p.exists():
                p.unlink()
        raise
