"""Weighted mask fusion, threshold sweeps, and pixel-wise precision/recall/F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mask import RoadMask, ShapeMismatch


class BadWeights(ValueError):
    pass


MASK_SOURCES = ("osm_refined", "osm_candidates", "grabcut", "lanemark", "lidar")
CATEGORIES = ("UM", "UMM", "UU")


@dataclass(frozen=True)
class FusionWeights:
    w_osm_refined: float = 0.2
    w_osm_candidates: float = 0.2
    w_grabcut: float = 0.2
    w_lanemark: float = 0.2
    w_lidar: float = 0.2

    def __post_init__(self):
        arr = self.as_array()
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise BadWeights(f"weights outside [0, 1]: {arr.tolist()}")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise BadWeights(f"weights sum to {arr.sum()!r}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.w_osm_refined,
                self.w_osm_candidates,
                self.w_grabcut,
                self.w_lanemark,
                self.w_lidar,
            ]
        )

    @classmethod
    def from_sequence(cls, values) -> "FusionWeights":
        vals = [float(v) for v in values]
        if len(vals) != 5:
            raise BadWeights(f"expected 5 weights, got {len(vals)}")
        return cls(*vals)


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    category: str = ""
    degenerate: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, category: str = "") -> "EvalResult":
        degenerate = (tp + fp == 0) or (tp + fn == 0)
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1, tp, fp, fn, category, degenerate)


def fuse(masks, weights: FusionWeights) -> RoadMask:
    """Per-pixel weighted sum of the five masks, in MASK_SOURCES order."""
    masks = list(masks)
    if len(masks) != 5:
        raise ShapeMismatch(f"expected 5 masks, got {len(masks)}")
    ref = masks[0]
    out = np.zeros(ref.shape, dtype=np.float64)
    for m, w in zip(masks, weights.as_array()):
        ref.same_shape(m)
        out += w * m.data.astype(np.float64)
    return RoadMask(np.clip(out, 0.0, 1.0), "confidence")


def threshold(conf: RoadMask, t: float) -> RoadMask:
    """Binary mask of pixels strictly above t."""
    if conf.kind != "confidence":
        raise ValueError("threshold expects a confidence mask")
    return RoadMask((conf.data > t).astype(np.uint8), "binary")


def decode_gt(image: np.ndarray, road_color=(255, 0, 255)) -> RoadMask:
    """Binary ground truth from an annotation image: road where the pixel
    equals road_color exactly."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError("expected an RGB annotation image")
    match = np.all(img[..., :3] == np.asarray(road_color, dtype=img.dtype), axis=2)
    return RoadMask(match.astype(np.uint8), "binary")


def evaluate(pred: RoadMask, gt: RoadMask, category: str = "") -> EvalResult:
    """Pixel-count precision/recall/F1 of a binary prediction."""
    pred.same_shape(gt)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return EvalResult.from_counts(tp, fp, fn, category)


@dataclass
class PrSweep:
    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    f1s: np.ndarray

    @property
    def best(self) -> tuple[float, float, float, float]:
        """(t, precision, recall, f1) at the max-F1 operating point; F1 ties
        resolve to the smallest threshold."""
        i = int(np.argmax(self.f1s))
        return (
            float(self.thresholds[i]),
            float(self.precisions[i]),
            float(self.recalls[i]),
            float(self.f1s[i]),
        )

    def rows(self):
        return list(zip(self.thresholds, self.precisions, self.recalls, self.f1s))


def pr_sweep(conf: RoadMask, gt: RoadMask, step: float = 0.01) -> PrSweep:
    """Precision/recall/F1 across thresholds 0.00 .. 1.00."""
    if conf.kind != "confidence":
        raise ValueError("pr_sweep expects a confidence mask")
    conf.same_shape(gt)
    n = int(round(1.0 / step))
    ts = np.arange(n + 1) * step
    g = gt.data.astype(bool)
    ps, rs, fs = [], [], []
    for t in ts:
        p = conf.data > t
        tp = int(np.count_nonzero(p & g))
        fp = int(np.count_nonzero(p & ~g))
        fn = int(np.count_nonzero(~p & g))
        res = EvalResult.from_counts(tp, fp, fn)
        ps.append(res.precision)
        rs.append(res.recall)
        fs.append(res.f1)
    return PrSweep(ts, np.array(ps), np.array(rs), np.array(fs))


def sweep_from_counts(tps, fps, fns, thresholds) -> PrSweep:
    """PrSweep from pre-aggregated per-threshold pixel counts (micro-average)."""
    ps, rs, fs = [], [], []
    for tp, fp, fn in zip(tps, fps, fns):
        res = EvalResult.from_counts(int(tp), int(fp), int(fn))
        ps.append(res.precision)
        rs.append(res.recall)
        fs.append(res.f1)
    return PrSweep(np.asarray(thresholds), np.array(ps), np.array(rs), np.array(fs))


def format_results_table(results: dict[str, dict[str, EvalResult]], categories=CATEGORIES) -> str:
    """Text table: one row per mask source, P/R/F1 columns per category."""
    col_names = []
    for cat in categories:
        col_names += [f"{cat} P", f"{cat} R", f"{cat} F1"]
    name_w = max([len("source")] + [len(k) for k in results]) + 2
    header = "source".ljust(name_w) + "".join(c.rjust(10) for c in col_names)
    lines = [header, "-" * len(header)]
    for source, per_cat in results.items():
        cells = []
        for cat in categories:
            res = per_cat.get(cat)
            if res is None:
                cells += ["-"] * 3
            else:
                cells += [f"{res.precision:.4f}", f"{res.recall:.4f}", f"{res.f1:.4f}"]
        lines.append(source.ljust(name_w) + "".join(c.rjust(10) for c in cells))
    return "\n".join(lines)
