"""Lidar ground mask: scan loading, sector-wise ground fit, projection, fill."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import CameraModel
from .mask import RoadMask


class TruncatedScan(ValueError):
    """Scan byte length is not a multiple of the 16-byte point record."""


@dataclass
class GroundSegConfig:
    n_sectors: int = 180
    bin_size: float = 0.5
    max_slope_deg: float = 10.0
    height_tol: float = 0.3
    fill_radius: int = 5

    def __post_init__(self):
        if min(self.n_sectors, self.bin_size, self.max_slope_deg, self.height_tol, self.fill_radius) <= 0:
            raise ValueError("all ground-segmentation parameters must be positive")


def load_velodyne(data: bytes) -> np.ndarray:
    """Decode little-endian float32 (x, y, z, reflectance) quadruples to (N, 4)."""
    if len(data) % 16 != 0:
        raise TruncatedScan(f"{len(data)} bytes is not a multiple of 16")
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float32)


def _fit_line(sr: float, sz: float, srr: float, srz: float, n: int) -> tuple[float, float]:
    """Least-squares z = a*r + b from accumulated sums."""
    denom = n * srr - sr * sr
    if abs(denom) < 1e-12:
        return 0.0, sz / n
    a = (n * srz - sr * sz) / denom
    b = (sz - a * sr) / n
    return a, b


def segment_ground(cloud: np.ndarray, cfg: GroundSegConfig | None = None) -> np.ndarray:
    """Boolean ground label per point.

    The cloud is split into polar sectors around the sensor; in each sector the
    lowest point per range bin seeds a greedy piecewise-line fit with bounded
    slope, and a point is ground when it sits within height_tol of the line
    covering its range.
    """
    cfg = cfg or GroundSegConfig()
    cloud = np.asarray(cloud)
    n_pts = len(cloud)
    labels = np.zeros(n_pts, dtype=bool)
    if n_pts == 0:
        return labels

    x, y, z = cloud[:, 0].astype(np.float64), cloud[:, 1].astype(np.float64), cloud[:, 2].astype(np.float64)
    r = np.hypot(x, y)
    ang = np.arctan2(y, x)  # [-pi, pi]
    sector = np.clip(
        ((ang + math.pi) / (2 * math.pi) * cfg.n_sectors).astype(np.int64),
        0,
        cfg.n_sectors - 1,
    )
    max_slope = math.tan(math.radians(cfg.max_slope_deg))

    order = np.argsort(sector, kind="stable")
    bounds = np.searchsorted(sector[order], np.arange(cfg.n_sectors + 1))
    for s in range(cfg.n_sectors):
        idx = order[bounds[s] : bounds[s + 1]]
        if idx.size == 0:
            continue
        rs = r[idx]
        zs = z[idx]
        bins = (rs / cfg.bin_size).astype(np.int64)

        # Lowest point per occupied bin, in range order.
        sort2 = np.argsort(bins, kind="stable")
        b_sorted = bins[sort2]
        _, starts = np.unique(b_sorted, return_index=True)
        ends = np.append(starts[1:], len(b_sorted))
        reps_r = []
        reps_z = []
        for u0, u1 in zip(starts, ends):
            members = sort2[u0:u1]
            j = members[np.argmin(zs[members])]
            reps_r.append(rs[j])
            reps_z.append(zs[j])
        reps_r = np.array(reps_r)
        reps_z = np.array(reps_z)

        # Greedy piecewise lines over the bin representatives. A new piece may
        # only anchor within height_tol of the previous piece's extrapolation,
        # so bins holding nothing but elevated structure never seed a line.
        lines = []  # (r_lo, r_hi, slope, intercept)
        sr = reps_r[0]
        sz_ = reps_z[0]
        srr = reps_r[0] ** 2
        srz = reps_r[0] * reps_z[0]
        cnt = 1
        r_lo = reps_r[0]
        r_hi = reps_r[0]
        a, b = 0.0, reps_z[0]
        for i in range(1, len(reps_r)):
            tr, tz = reps_r[i], reps_z[i]
            na, nb = _fit_line(sr + tr, sz_ + tz, srr + tr * tr, srz + tr * tz, cnt + 1)
            if abs(na) <= max_slope and abs(na * tr + nb - tz) <= cfg.height_tol:
                sr += tr
                sz_ += tz
                srr += tr * tr
                srz += tr * tz
                cnt += 1
                a, b = na, nb
                r_hi = tr
            elif abs(a * tr + b - tz) <= cfg.height_tol:
                lines.append((r_lo, r_hi, a, b))
                sr, sz_, srr, srz, cnt = tr, tz, tr * tr, tr * tz, 1
                r_lo = r_hi = tr
                a, b = 0.0, tz
        lines.append((r_lo, r_hi, a, b))

        los = np.array([ln[0] for ln in lines])
        his = np.array([ln[1] for ln in lines])
        slopes = np.array([ln[2] for ln in lines])
        icepts = np.array([ln[3] for ln in lines])

        # Assign each point the line whose range interval is nearest.
        below = rs[:, None] < los[None, :]
        above = rs[:, None] > his[None, :]
        gap = np.where(below, los[None, :] - rs[:, None], 0.0) + np.where(
            above, rs[:, None] - his[None, :], 0.0
        )
        li = np.argmin(gap, axis=1)
        pred = slopes[li] * rs + icepts[li]
        labels[idx] = np.abs(zs - pred) <= cfg.height_tol
    return labels


def project_points(
    cloud: np.ndarray, labels: np.ndarray, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """Project points through P @ R_rect @ T_velo_cam; keep those with positive
    depth that land inside the image. Returns (uv pixels (M, 2), ground flags)."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if len(cloud) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    homo = np.column_stack([cloud[:, :3], np.ones(len(cloud))])
    q = homo @ cam.full_projection.T
    depth = q[:, 2]
    keep = depth > 0
    uv = np.full((len(cloud), 2), -1.0)
    uv[keep] = q[keep, :2] / depth[keep, None]
    inside = (
        keep
        & (uv[:, 0] >= 0)
        & (uv[:, 0] < cam.image_w)
        & (uv[:, 1] >= 0)
        & (uv[:, 1] < cam.image_h)
    )
    return uv[inside], np.asarray(labels, dtype=bool)[inside]


def _disc(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return yy * yy + xx * xx <= radius * radius


def fill_mask(
    ground_uv: np.ndarray, image_w: int, image_h: int, cfg: GroundSegConfig | None = None
) -> RoadMask:
    """Splat ground points, dilate + close with a disc, keep the largest
    8-connected region."""
    cfg = cfg or GroundSegConfig()
    grid = np.zeros((image_h, image_w), dtype=bool)
    uv = np.asarray(ground_uv, dtype=np.float64).reshape(-1, 2)
    if len(uv):
        cols = np.floor(uv[:, 0]).astype(np.int64)
        rows = np.floor(uv[:, 1]).astype(np.int64)
        ok = (cols >= 0) & (cols < image_w) & (rows >= 0) & (rows < image_h)
        grid[rows[ok], cols[ok]] = True
    if not grid.any():
        return RoadMask(grid.astype(np.uint8), "binary")

    disc = _disc(cfg.fill_radius)
    pad = 2 * cfg.fill_radius
    padded = np.pad(grid, pad)
    padded = ndimage.binary_dilation(padded, structure=disc)
    padded = ndimage.binary_closing(padded, structure=disc)
    filled = padded[pad:-pad, pad:-pad]

    comp, _ = ndimage.label(filled, structure=np.ones((3, 3), dtype=bool))
    sizes = np.bincount(comp.ravel())
    sizes[0] = 0
    largest = comp == np.argmax(sizes)
    return RoadMask(largest.astype(np.uint8), "binary")
