"""Super-pixel segmentation and majority relabeling of the rendered road mask."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mask import RoadMask, ShapeMismatch


class KTooLarge(ValueError):
    pass


@dataclass
class SuperpixelMap:
    """Per-pixel segment labels in [0, k); every segment is 4-connected."""

    labels: np.ndarray
    k: int


def _to_lab(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(np.float32) / 255.0
    return cv2.cvtColor(img.astype(np.float32), cv2.COLOR_RGB2Lab)


def superpixels(image: np.ndarray, k: int, compactness: float = 10.0, iters: int = 10) -> SuperpixelMap:
    """K-means clustering over (L, a, b, y, x) with grid seeding.

    Seeds start on a regular grid, each cluster searches a 2S window around
    its centre for `iters` rounds, and disconnected leftovers are merged into
    the adjacent segment they touch most.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an RGB image")
    h, w = img.shape[:2]
    n = h * w
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds pixel count {n}")

    lab = _to_lab(img)
    s = math.sqrt(n / k)
    rows = max(1, round(math.sqrt(k * h / w)))
    cols = math.ceil(k / rows)

    cy = (np.arange(rows) + 0.5) * h / rows
    cx = (np.arange(cols) + 0.5) * w / cols
    grid = [(y, x) for y in cy for x in cx][:k]
    centers = np.empty((k, 5), dtype=np.float64)
    for i, (y, x) in enumerate(grid):
        centers[i, :3] = lab[int(y), int(x)]
        centers[i, 3] = y
        centers[i, 4] = x

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    spatial_w = (compactness / s) ** 2
    labels = np.zeros((h, w), dtype=np.int32)

    win = int(math.ceil(s)) + 1  # +-S search window: grid spacing equals S
    for _ in range(iters):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for ci in range(k):
            y0 = max(0, int(centers[ci, 3]) - win)
            y1 = min(h, int(centers[ci, 3]) + win + 1)
            x0 = max(0, int(centers[ci, 4]) - win)
            x1 = min(w, int(centers[ci, 4]) + win + 1)
            patch = lab[y0:y1, x0:x1]
            d = np.sum((patch - centers[ci, :3]) ** 2, axis=2)
            d += spatial_w * (
                (yy[y0:y1, x0:x1] - centers[ci, 3]) ** 2
                + (xx[y0:y1, x0:x1] - centers[ci, 4]) ** 2
            )
            better = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d[better]
            labels[y0:y1, x0:x1][better] = ci

        unassigned = labels < 0
        if unassigned.any():
            # Rare: pixels outside every search window go to the spatially
            # nearest centre.
            py = yy[unassigned]
            px = xx[unassigned]
            d2 = (py[:, None] - centers[None, :, 3]) ** 2 + (
                px[:, None] - centers[None, :, 4]
            ) ** 2
            labels[unassigned] = np.argmin(d2, axis=1)

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        counts[counts == 0] = np.nan
        for f in range(3):
            centers[:, f] = np.where(
                np.isnan(counts),
                centers[:, f],
                np.bincount(flat, weights=lab[..., f].ravel(), minlength=k) / counts,
            )
        centers[:, 3] = np.where(
            np.isnan(counts),
            centers[:, 3],
            np.bincount(flat, weights=yy.ravel(), minlength=k) / counts,
        )
        centers[:, 4] = np.where(
            np.isnan(counts),
            centers[:, 4],
            np.bincount(flat, weights=xx.ravel(), minlength=k) / counts,
        )

    labels = _enforce_connectivity(labels)
    k_final = int(labels.max()) + 1
    return SuperpixelMap(labels=labels, k=k_final)


def _partition_components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected components of a label partition."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    right = labels[:, :-1] == labels[:, 1:]
    down = labels[:-1, :] == labels[1:, :]
    src = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    dst = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    adj = coo_matrix(
        (np.ones(len(src), dtype=np.int8), (src, dst)), shape=(h * w, h * w)
    )
    n_comp, comp = connected_components(adj, directed=False)
    return comp.reshape(h, w), n_comp


def _component_adjacency(comp: np.ndarray) -> dict[int, dict[int, int]]:
    """comp id -> {neighbor comp id: shared boundary length} over 4-adjacency."""
    pairs = []
    right = comp[:, :-1] != comp[:, 1:]
    pairs.append(np.stack([comp[:, :-1][right], comp[:, 1:][right]], axis=1))
    down = comp[:-1, :] != comp[1:, :]
    pairs.append(np.stack([comp[:-1, :][down], comp[1:, :][down]], axis=1))
    ab = np.vstack(pairs)
    ab = np.vstack([ab, ab[:, ::-1]])
    uniq, counts = np.unique(ab, axis=0, return_counts=True)
    adj: dict[int, dict[int, int]] = {}
    for (a, b), c in zip(uniq, counts):
        adj.setdefault(int(a), {})[int(b)] = int(c)
    return adj


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep only the largest component of each cluster; merge the rest into the
    adjacent resolved component they share the most boundary with, then
    compact label values."""
    comp, n_comp = _partition_components(labels)
    flat_comp = comp.ravel()
    sizes = np.bincount(flat_comp, minlength=n_comp)
    comp_label = np.full(n_comp, -1, dtype=np.int64)
    comp_label[flat_comp] = labels.ravel()

    final_label = np.full(n_comp, -1, dtype=np.int64)
    order = np.lexsort((np.arange(n_comp), -sizes))
    seen: set[int] = set()
    for c in order:
        if comp_label[c] not in seen:
            seen.add(int(comp_label[c]))
            final_label[c] = comp_label[c]

    adj = _component_adjacency(comp) if n_comp > 1 else {}
    pending = [c for c in range(n_comp) if final_label[c] < 0]
    while pending:
        progressed = []
        still = []
        for c in pending:
            best_label, best_weight = -1, -1
            for nb, weight in adj.get(c, {}).items():
                if final_label[nb] >= 0 and (
                    weight > best_weight
                    or (weight == best_weight and final_label[nb] < best_label)
                ):
                    best_label, best_weight = int(final_label[nb]), weight
            if best_label >= 0:
                progressed.append((c, best_label))
            else:
                still.append(c)
        if not progressed:  # isolated orphans only: promote them as-is
            for c in still:
                final_label[c] = comp_label[c]
            break
        for c, lbl in progressed:
            final_label[c] = lbl
        pending = still

    final = final_label[comp]
    used = np.unique(final)
    remap = np.zeros(used.max() + 1, dtype=np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    return remap[final]


def relabel(sp: SuperpixelMap, init: RoadMask) -> RoadMask:
    """Majority vote per segment, then keep the single largest road region.

    A segment turns road only when strictly more than half its pixels carry
    the initial road label; afterwards every 8-connected road component except
    the largest is cleared.
    """
    if sp.labels.shape != init.shape:
        raise ShapeMismatch(f"{sp.labels.shape} vs {init.shape}")
    if init.kind != "binary":
        raise ValueError("relabel expects a binary mask")
    flat = sp.labels.ravel()
    road_counts = np.bincount(flat, weights=init.data.ravel(), minlength=sp.k)
    totals = np.bincount(flat, minlength=sp.k)
    seg_road = 2 * road_counts > totals  # strict majority; exact ties lose
    mask = seg_road[sp.labels]

    if mask.any():
        comp, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        mask = comp == np.argmax(sizes)
    return RoadMask(mask.astype(np.uint8), "binary")


def save_superpixel_png(sp: SuperpixelMap, path) -> None:
    """Debug dump of the label grid as 16-bit grayscale."""
    if sp.k > 65535:
        raise ValueError("too many segments for 16-bit labels")
    Image.fromarray(sp.labels.astype(np.uint16)).save(path)
