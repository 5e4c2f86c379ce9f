"""Betti-curve vectorization of persistence diagrams.

A diagram becomes a fixed-length feature vector by sampling the
sublevel-set component count at n evenly spaced thresholds (default 100).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_complex import ImageTensor
from .persistence import PersistenceDiagram, _pd0_arrays

__all__ = ["CurveConfig", "BettiCurve", "betti_curve", "vectorize_image", "vectorize_dataset"]


@dataclass(frozen=True)
class CurveConfig:
    """Sampling configuration for Betti curves.

    range_mode is "auto" (per-image [min, max]), "global" (dataset-wide
    [min, max]) or "fixed" with explicit t_min/t_max. normalize divides
    the curve by its maximum (off by default; raw counts feed the nets).
    """

    n: int = 100
    range_mode: str = "auto"
    t_min: float = 0.0
    t_max: float = 1.0
    normalize: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"curve length must be >= 1, got {self.n}")
        if self.range_mode not in ("auto", "global", "fixed"):
            raise ValueError(f"unknown range mode {self.range_mode!r}")
        if self.range_mode == "fixed" and self.t_min > self.t_max:
            raise ValueError(f"t_min {self.t_min} > t_max {self.t_max}")


@dataclass(frozen=True)
class BettiCurve:
    """Sampled component counts over [t_min, t_max]."""

    samples: np.ndarray
    t_min: float
    t_max: float

    @property
    def n(self) -> int:
        return self.samples.size


def _sample_grid(t_min: float, t_max: float, n: int) -> np.ndarray:
    if n == 1 or t_min == t_max:
        return np.full(n, t_min, dtype=np.float64)
    return np.linspace(t_min, t_max, n)


def _curve_from_arrays(
    births: np.ndarray,
    deaths: np.ndarray,
    essential_idx: int,
    t_min: float,
    t_max: float,
    n: int,
) -> np.ndarray:
    """Counts via sorted births/deaths: a non-essential bar is alive on
    [birth, death), the essential bar for all t >= its birth."""
    ts = _sample_grid(t_min, t_max, n)
    ess_birth = births[essential_idx]
    mask = np.ones(len(births), dtype=bool)
    mask[essential_idx] = False
    b_sorted = np.sort(births[mask])
    d_sorted = np.sort(deaths[mask])
    alive = np.searchsorted(b_sorted, ts, side="right") - np.searchsorted(
        d_sorted, ts, side="right"
    )
    alive = alive + (ts >= ess_birth)
    return alive.astype(np.float64)


def betti_curve(pd: PersistenceDiagram, t_min: float, t_max: float, n: int) -> BettiCurve:
    """Sample the diagram's component count at n thresholds over [t_min, t_max]."""
    if t_min > t_max:
        raise ValueError(f"t_min {t_min} > t_max {t_max}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    births = np.array([bar.birth for bar in pd.bars])
    deaths = np.array([bar.death for bar in pd.bars])
    ess = next(i for i, bar in enumerate(pd.bars) if bar.essential)
    samples = _curve_from_arrays(births, deaths, ess, t_min, t_max, n)
    return BettiCurve(samples=samples, t_min=float(t_min), t_max=float(t_max))


def _vectorize_values(values: np.ndarray, height: int, width: int, config: CurveConfig) -> BettiCurve:
    births, deaths, _, ess = _pd0_arrays(values, height, width)
    if config.range_mode == "auto":
        t_min, t_max = float(values.min()), float(values.max())
    else:  # global and fixed both carry explicit bounds at this level
        t_min, t_max = config.t_min, config.t_max
    samples = _curve_from_arrays(births, deaths, ess, t_min, t_max, config.n)
    if config.normalize:
        top = samples.max()
        if top > 0:
            samples = samples / top
    return BettiCurve(samples=samples, t_min=t_min, t_max=t_max)


def vectorize_image(image: ImageTensor, config: CurveConfig) -> BettiCurve:
    """Filtration -> PD_0 -> Betti curve for one image."""
    if config.range_mode == "global":
        # per-image call: global degenerates to the configured fixed bounds
        config = CurveConfig(config.n, "fixed", config.t_min, config.t_max, config.normalize)
    # operate on raw arrays; building per-image filtration/diagram objects
    # would dominate the runtime of batch extraction
    return _vectorize_values(image.values, image.height, image.width, config)


def vectorize_dataset(images: list[ImageTensor], config: CurveConfig) -> np.ndarray:
    """Row i is the curve of images[i]; rows are directly comparable in
    global mode, where the range spans the whole dataset."""
    if not images:
        raise ValueError("cannot vectorize an empty image list")
    if config.range_mode == "global":
        t_min = min(float(img.values.min()) for img in images)
        t_max = max(float(img.values.max()) for img in images)
        config = CurveConfig(config.n, "fixed", t_min, t_max, config.normalize)
    return np.stack([vectorize_image(img, config).samples for img in images])
