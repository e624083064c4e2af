"""Image-only road masks: iterated graph-cut segmentation and lane-mark fill.

The graph-cut route models road/non-road color statistics with full-covariance
Gaussian mixtures seeded from two rectangles, alternates component
reassignment, parameter refits, and exact s-t min-cuts until labels settle.
The lane-mark route runs blur -> Canny -> probabilistic Hough, splits segments
into left/right families by slope, fits one line per family, and fills the
region between them up to the horizon.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .mask import RoadMask

# Integer capacities must stay inside int32 for scipy's max-flow. The hard
# seed capacity exceeds the largest possible sum of a pixel's other incident
# capacities (8 * gamma * scale pairwise + clamped unary), which pins seeds.
_CAP_SCALE = 2**12
_UNARY_CLAMP = 2000.0
_HARD_CAP = 2**27


class RectOutOfBounds(ValueError):
    pass


class DegenerateGmmWarning(UserWarning):
    """Mixture lost components for lack of samples."""


Rect = tuple[int, int, int, int]  # (row0, row1, col0, col1), half-open


@dataclass
class GrabcutConfig:
    bg_rect: Rect | None = None  # default: top bar, rows [0, 0.30 h)
    fg_rect: Rect | None = None  # default: rows [0.80 h, h) x cols [0.35 w, 0.65 w)
    gmm_components: int = 5
    max_iters: int = 5
    gamma: float = 50.0
    convergence: float = 0.001


@dataclass
class GrabcutResult:
    mask: RoadMask
    energies: list[float]
    iterations: int
    converged: bool


class _Gmm:
    """Full-covariance Gaussian mixture with hard component assignment.

    Initialization is deterministic: samples are ordered along their first
    principal axis and split into equal chunks, then refined by Lloyd rounds.
    """

    def __init__(self, means, covs, weights):
        self.means = means
        self.weights = weights
        self._precision = np.linalg.inv(covs)
        sign, logdet = np.linalg.slogdet(covs)
        self._log_norm = 0.5 * (3 * math.log(2 * math.pi) + logdet) - np.log(weights)

    @property
    def n_components(self) -> int:
        return len(self.means)

    @classmethod
    def fit(cls, samples: np.ndarray, k: int, lloyd_iters: int = 10) -> "_Gmm":
        n = len(samples)
        if n == 0:
            raise ValueError("cannot fit a mixture to zero samples")
        k_eff = min(k, n)
        if k_eff < k:
            warnings.warn(
                f"reducing mixture to {k_eff} components ({n} samples)",
                DegenerateGmmWarning,
            )
        centered = samples - samples.mean(axis=0)
        cov = centered.T @ centered
        _, vecs = np.linalg.eigh(cov)
        scores = samples @ vecs[:, -1]
        order = np.argsort(scores, kind="stable")
        centers = np.array([samples[c].mean(axis=0) for c in np.array_split(order, k_eff)])

        assign = np.zeros(n, dtype=np.int64)
        for _ in range(lloyd_iters):
            d2 = ((samples[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            assign = np.argmin(d2, axis=1)
            for c in range(k_eff):
                sel = assign == c
                if sel.any():
                    centers[c] = samples[sel].mean(axis=0)
        return cls._from_assignment(samples, assign, k_eff)

    @classmethod
    def _from_assignment(cls, samples: np.ndarray, assign: np.ndarray, k: int) -> "_Gmm":
        means, covs, weights = [], [], []
        for c in range(k):
            sel = assign == c
            cnt = int(sel.sum())
            if cnt == 0:
                continue
            pts = samples[sel]
            mu = pts.mean(axis=0)
            diff = pts - mu
            cov = diff.T @ diff / cnt + 1e-6 * np.eye(3)
            means.append(mu)
            covs.append(cov)
            weights.append(cnt / len(samples))
        if len(means) < k:
            warnings.warn(
                f"dropping {k - len(means)} empty mixture components",
                DegenerateGmmWarning,
            )
        return cls(np.array(means), np.array(covs), np.array(weights))

    def component_nll(self, z: np.ndarray) -> np.ndarray:
        """(N, k) negative log of weight * gaussian density."""
        diff = z[:, None, :] - self.means[None, :, :]
        maha = np.einsum("nki,kij,nkj->nk", diff, self._precision, diff)
        return 0.5 * maha + self._log_norm[None, :]

    def best_nll(self, z: np.ndarray) -> np.ndarray:
        return self.component_nll(z).min(axis=1)

    def refit(self, samples: np.ndarray) -> "_Gmm":
        """One reassignment + maximum-likelihood parameter update."""
        if len(samples) == 0:
            warnings.warn("refit with zero samples; keeping parameters", DegenerateGmmWarning)
            return self
        assign = np.argmin(self.component_nll(samples), axis=1)
        return _Gmm._from_assignment(samples, assign, self.n_components)


def _default_rects(h: int, w: int) -> tuple[Rect, Rect]:
    bg = (0, int(0.30 * h), 0, w)
    fg = (int(0.80 * h), h, int(0.35 * w), int(0.65 * w))
    return bg, fg


def _check_rect(rect: Rect, h: int, w: int, name: str) -> None:
    r0, r1, c0, c1 = rect
    if not (0 <= r0 < r1 <= h and 0 <= c0 < c1 <= w):
        raise RectOutOfBounds(f"{name} rectangle {rect} not inside {h}x{w} image")


def _rects_disjoint(a: Rect, b: Rect) -> bool:
    return a[1] <= b[0] or b[1] <= a[0] or a[3] <= b[2] or b[3] <= a[2]


def _rect_mask(rect: Rect, h: int, w: int) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[rect[0] : rect[1], rect[2] : rect[3]] = True
    return m


def _pairwise_edges(img: np.ndarray, gamma: float):
    """8-neighborhood contrast weights gamma * exp(-beta |dz|^2) / dist."""
    h, w = img.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    offsets = ((0, 1, 1.0), (1, 0, 1.0), (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)))
    diffs2 = []
    pairs = []
    for dy, dx, dist in offsets:
        if dx >= 0:
            a = idx[: h - dy, : w - dx]
            b = idx[dy:, dx:]
            d2 = ((img[: h - dy, : w - dx] - img[dy:, dx:]) ** 2).sum(axis=2)
        else:
            a = idx[: h - dy, -dx:]
            b = idx[dy:, : w + dx]
            d2 = ((img[: h - dy, -dx:] - img[dy:, : w + dx]) ** 2).sum(axis=2)
        diffs2.append(d2.ravel())
        pairs.append((a.ravel(), b.ravel(), dist))
    all_d2 = np.concatenate(diffs2)
    mean_d2 = float(all_d2.mean()) if all_d2.size else 0.0
    beta = 0.5 / mean_d2 if mean_d2 > 0 else 0.0
    src, dst, wgt = [], [], []
    for (a, b, dist), d2 in zip(pairs, diffs2):
        src.append(a)
        dst.append(b)
        wgt.append(gamma * np.exp(-beta * d2) / dist)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(wgt)


def _grid_min_cut(
    d_fg: np.ndarray,
    d_bg: np.ndarray,
    hard_fg: np.ndarray,
    hard_bg: np.ndarray,
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    edge_cap: np.ndarray,
) -> np.ndarray:
    """Exact min-cut labeling; True = foreground (source side)."""
    n = d_fg.size
    s_node, t_node = n, n + 1
    shift = np.minimum(d_fg, d_bg)
    cap_src = np.rint(np.minimum(d_bg - shift, _UNARY_CLAMP) * _CAP_SCALE).astype(np.int32)
    cap_snk = np.rint(np.minimum(d_fg - shift, _UNARY_CLAMP) * _CAP_SCALE).astype(np.int32)
    cap_src[hard_fg] = _HARD_CAP
    cap_snk[hard_fg] = 0
    cap_src[hard_bg] = 0
    cap_snk[hard_bg] = _HARD_CAP

    pix = np.arange(n)
    rows = np.concatenate([np.full(n, s_node), pix, edge_src, edge_dst])
    cols = np.concatenate([pix, np.full(n, t_node), edge_dst, edge_src])
    caps = np.concatenate([cap_src, cap_snk, edge_cap, edge_cap]).astype(np.int32)
    graph = csr_matrix((caps, (rows, cols)), shape=(n + 2, n + 2))
    result = maximum_flow(graph, s_node, t_node)
    residual = graph - result.flow
    residual.data = (residual.data > 0).astype(np.int64)
    residual.eliminate_zeros()
    reachable = breadth_first_order(residual, s_node, directed=True, return_predecessors=False)
    fg = np.zeros(n, dtype=bool)
    fg[reachable[reachable < n]] = True
    return fg


def grabcut_segment(image: np.ndarray, cfg: GrabcutConfig | None = None) -> GrabcutResult:
    """Iterated GMM + min-cut road extraction with per-iteration energies.

    The bg_rect/fg_rect seeds stay hard-constrained throughout; iteration
    stops when the fraction of changed labels drops below cfg.convergence or
    after cfg.max_iters rounds. The returned mask keeps only the largest
    8-connected road component.
    """
    cfg = cfg or GrabcutConfig()
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an RGB image")
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
    h, w = img.shape[:2]
    bg_default, fg_default = _default_rects(h, w)
    bg_rect = cfg.bg_rect or bg_default
    fg_rect = cfg.fg_rect or fg_default
    _check_rect(bg_rect, h, w, "background")
    _check_rect(fg_rect, h, w, "foreground")
    if not _rects_disjoint(bg_rect, fg_rect):
        raise RectOutOfBounds("seed rectangles overlap")

    hard_fg = _rect_mask(fg_rect, h, w).ravel()
    hard_bg = _rect_mask(bg_rect, h, w).ravel()
    flat = img.reshape(-1, 3)

    fg_gmm = _Gmm.fit(flat[hard_fg], cfg.gmm_components)
    bg_gmm = _Gmm.fit(flat[hard_bg], cfg.gmm_components)
    edge_src, edge_dst, edge_w = _pairwise_edges(img, cfg.gamma)
    edge_cap = np.rint(edge_w * _CAP_SCALE).astype(np.int32)

    labels = None
    energies: list[float] = []
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        d_fg = fg_gmm.best_nll(flat)
        d_bg = bg_gmm.best_nll(flat)
        new_labels = _grid_min_cut(d_fg, d_bg, hard_fg, hard_bg, edge_src, edge_dst, edge_cap)
        iterations += 1

        data_term = float(np.where(new_labels, d_fg, d_bg).sum())
        boundary = new_labels[edge_src] != new_labels[edge_dst]
        energies.append(data_term + float(edge_w[boundary].sum()))

        if labels is not None:
            changed = float(np.mean(new_labels != labels))
            if changed < cfg.convergence:
                labels = new_labels
                converged = True
                break
        labels = new_labels
        fg_gmm = fg_gmm.refit(flat[labels])
        bg_gmm = bg_gmm.refit(flat[~labels])

    road = labels.reshape(h, w)
    if road.any():
        comp, _ = ndimage.label(road, structure=np.ones((3, 3), dtype=bool))
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        road = comp == np.argmax(sizes)
    return GrabcutResult(
        mask=RoadMask(road.astype(np.uint8), "binary"),
        energies=energies,
        iterations=iterations,
        converged=converged,
    )


def grabcut_road(image: np.ndarray, cfg: GrabcutConfig | None = None) -> RoadMask:
    return grabcut_segment(image, cfg).mask


# ---------------------------------------------------------------------------
# Lane-mark detection
# ---------------------------------------------------------------------------


@dataclass
class LaneMarkConfig:
    canny_low: int = 50
    canny_high: int = 150
    hough_rho: float = 1.0
    hough_theta_deg: float = 1.0
    hough_votes: int = 30
    min_len: int = 20
    max_gap: int = 10
    horizon_frac: float = 0.55
    min_abs_slope: float = 0.3
    fit_degree: int = 1
    blur_sigma: float = 1.5
    roi_top_half_width: float = 0.2  # fraction of image width around the centre

    def __post_init__(self):
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be < canny_high")
        if not 0.0 < self.horizon_frac < 1.0:
            raise ValueError("horizon_frac must lie in (0, 1)")


@dataclass
class LaneMarkResult:
    mask: RoadMask
    found: bool
    n_left: int = 0
    n_right: int = 0
    left_fit: np.ndarray | None = None  # x = poly(y) coefficients
    right_fit: np.ndarray | None = None


def _roi_mask(h: int, w: int, cfg: LaneMarkConfig) -> np.ndarray:
    y_h = int(cfg.horizon_frac * h)
    half = cfg.roi_top_half_width * w
    poly = np.array(
        [
            [0, h - 1],
            [w - 1, h - 1],
            [int(w / 2 + half), y_h],
            [int(w / 2 - half), y_h],
        ],
        dtype=np.int32,
    )
    mask = np.zeros((h, w), dtype=np.uint8)
    cv2.fillPoly(mask, [poly], 1)
    return mask


def fill_between_lines(
    left_fit: np.ndarray, right_fit: np.ndarray, h: int, w: int, horizon_frac: float
) -> RoadMask:
    """Fill pixels between x = left(y) and x = right(y) from the horizon row
    down; rows where the lines cross stay empty."""
    y0 = int(math.ceil(horizon_frac * h))
    rows = np.arange(y0, h)
    xl = np.polyval(left_fit, rows)
    xr = np.polyval(right_fit, rows)
    cols = np.arange(w)
    band = (cols[None, :] >= np.ceil(xl)[:, None]) & (cols[None, :] <= np.floor(xr)[:, None])
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[y0:h] = band.astype(np.uint8)
    return RoadMask(mask, "binary")


def lane_mark_mask(
    image: np.ndarray, cfg: LaneMarkConfig | None = None, debug_dir=None
) -> LaneMarkResult:
    """Road region between the fitted left and right lane-mark lines.

    Edge segments inside a lower-image trapezoid are split by slope sign into
    the two lane families; fewer than one segment per family reports
    found=False with an empty mask.
    """
    cfg = cfg or LaneMarkConfig()
    img = np.asarray(image)
    if img.ndim == 3:
        gray = cv2.cvtColor(img, cv2.COLOR_RGB2GRAY)
    else:
        gray = img
    if gray.dtype != np.uint8:
        gray = np.clip(gray * 255.0 if gray.max() <= 1.0 else gray, 0, 255).astype(np.uint8)
    h, w = gray.shape

    blurred = cv2.GaussianBlur(gray, (0, 0), cfg.blur_sigma)
    edges = cv2.Canny(blurred, cfg.canny_low, cfg.canny_high)
    edges &= _roi_mask(h, w, cfg) * 255

    segments = cv2.HoughLinesP(
        edges,
        cfg.hough_rho,
        math.radians(cfg.hough_theta_deg),
        cfg.hough_votes,
        minLineLength=cfg.min_len,
        maxLineGap=cfg.max_gap,
    )
    if segments is not None:
        segments = segments.reshape(-1, 4)
    empty = RoadMask(np.zeros((h, w), dtype=np.uint8), "binary")

    left_pts: list[tuple[float, float, float]] = []  # (y, x, weight)
    right_pts: list[tuple[float, float, float]] = []
    n_left = n_right = 0
    if segments is not None:
        for x1, y1, x2, y2 in segments:
            dx = float(x2 - x1)
            dy = float(y2 - y1)
            length = math.hypot(dx, dy)
            if abs(dx) < 1e-9:
                family = left_pts if (x1 + x2) / 2.0 < w / 2.0 else right_pts
            else:
                slope = dy / dx
                if abs(slope) < cfg.min_abs_slope:
                    continue
                family = left_pts if slope < 0 else right_pts
            family.append((float(y1), float(x1), length))
            family.append((float(y2), float(x2), length))
            if family is left_pts:
                n_left += 1
            else:
                n_right += 1

    if debug_dir is not None:
        _write_lane_debug(debug_dir, edges, segments, image)

    if n_left < 1 or n_right < 1:
        return LaneMarkResult(mask=empty, found=False, n_left=n_left, n_right=n_right)

    def fit(points):
        arr = np.array(points)
        return np.polyfit(arr[:, 0], arr[:, 1], cfg.fit_degree, w=np.sqrt(arr[:, 2]))

    left_fit = fit(left_pts)
    right_fit = fit(right_pts)
    mask = fill_between_lines(left_fit, right_fit, h, w, cfg.horizon_frac)
    return LaneMarkResult(
        mask=mask,
        found=True,
        n_left=n_left,
        n_right=n_right,
        left_fit=left_fit,
        right_fit=right_fit,
    )


def _write_lane_debug(debug_dir, edges, segments, image) -> None:
    import os

    os.makedirs(debug_dir, exist_ok=True)
    cv2.imwrite(os.path.join(debug_dir, "edges.png"), edges)
    overlay = np.asarray(image).copy()
    if overlay.ndim == 2:
        overlay = cv2.cvtColor(overlay, cv2.COLOR_GRAY2RGB)
    if segments is not None:
        for x1, y1, x2, y2 in segments.reshape(-1, 4):
            cv2.line(overlay, (int(x1), int(y1)), (int(x2), int(y2)), (255, 0, 0), 2)
    cv2.imwrite(os.path.join(debug_dir, "hough_lines.png"), overlay[..., ::-1])
