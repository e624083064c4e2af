"""Road-surface polygons from highway ways, rasterized into the camera plane.

Ways near the pose become flat ground strips (centerline offset by half the
road width with miter joins) in the vehicle frame, are clipped to the camera
frustum depth slab, projected, and scanline-filled at pixel centers. The
multiple-candidates variant renders perturbed poses and averages the binary
masks into a per-pixel road confidence.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .attributes import AttributeConfig, parse_direct
from .camera import CameraModel
from .geodesy import SpatialIndex, UtmPoint, VehiclePose
from .mask import RoadMask
from .osm import OsmGraph

_MITER_LIMIT = 4.0


class DegenerateProjection(ValueError):
    """Projection matrix has rank below 3."""


@dataclass(frozen=True)
class RoadPolygon:
    vertices: np.ndarray  # (N, 2) vehicle frame: x forward, y left, metres
    way_id: int
    width: float


@dataclass
class RenderConfig:
    radius: float = 100.0
    lane_width: float = 3.5
    near: float = 1.0
    far: float = 100.0


@dataclass(frozen=True)
class PoseCandidateSpec:
    """Perturbation model for viewpoint candidates: position within +-dx/+-dy
    metres, heading within +-dtheta degrees."""

    n: int = 100
    dx: float = 1.0
    dy: float = 1.0
    dtheta: float = 10.0
    distribution: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("candidate count must be >= 1")
        if min(self.dx, self.dy, self.dtheta) < 0:
            raise ValueError("perturbation ranges must be >= 0")
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


def _offset_polyline(pts: np.ndarray, half_width: float) -> np.ndarray | None:
    """Strip polygon around a polyline: vertices offset by +-half_width along
    miter-join normals, capped at the miter limit."""
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9
    pts = pts[keep]
    if len(pts) < 2:
        return None
    d = np.diff(pts, axis=0)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    normals = np.column_stack([-d[:, 1], d[:, 0]])  # left of travel

    offs = np.empty_like(pts)
    offs[0] = normals[0]
    offs[-1] = normals[-1]
    for i in range(1, len(pts) - 1):
        m = normals[i - 1] + normals[i]
        norm = np.linalg.norm(m)
        if norm < 1e-9:  # full reversal: fall back to the incoming normal
            offs[i] = normals[i - 1]
            continue
        m /= norm
        scale = min(1.0 / max(float(m @ normals[i]), 1.0 / _MITER_LIMIT), _MITER_LIMIT)
        offs[i] = m * scale
    left = pts + half_width * offs
    right = pts - half_width * offs
    return np.vstack([left, right[::-1]])


def build_road_polygons(
    graph: OsmGraph,
    index: SpatialIndex,
    pose: VehiclePose,
    radius: float = 100.0,
    lane_width: float = 3.5,
    attr_cfg: AttributeConfig | None = None,
) -> list[RoadPolygon]:
    """Strips for every highway way with a node within radius of the pose,
    expressed in the vehicle frame (x forward, y left)."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if len(index) == 0:
        return []
    p = np.array([pose.utm.x, pose.utm.y])
    hits = index.entries_within(pose.utm.x, pose.utm.y, radius)
    way_ids = sorted({index.entries[i][1] for i in hits})

    gamma = math.radians(pose.heading_deg)
    # Rows of the world->vehicle rotation: forward and left unit vectors.
    rot = np.array(
        [[math.cos(gamma), math.sin(gamma)], [-math.sin(gamma), math.cos(gamma)]]
    )

    polys: list[RoadPolygon] = []
    for wid in way_ids:
        refs = graph.ways[wid].node_refs
        rows = [index.node_rows[nid] for nid in refs]
        world = index.coords[rows]
        local = (world - p) @ rot.T
        width = parse_direct(graph, wid, attr_cfg).num_lanes * lane_width
        verts = _offset_polyline(local, width / 2.0)
        if verts is not None:
            polys.append(RoadPolygon(vertices=verts, way_id=wid, width=width))
    return polys


def _clip_depth(pts_cam: np.ndarray, depth: np.ndarray, near: float, far: float):
    """Sutherland-Hodgman clip of a polygon against the near/far depth slab."""
    poly = np.column_stack([pts_cam, depth])
    for keep_fn, boundary in (
        (lambda z: z >= near, near),
        (lambda z: z <= far, far),
    ):
        if len(poly) == 0:
            return poly
        out = []
        prev = poly[-1]
        prev_in = keep_fn(prev[-1])
        for cur in poly:
            cur_in = keep_fn(cur[-1])
            if cur_in != prev_in:
                t = (boundary - prev[-1]) / (cur[-1] - prev[-1])
                out.append(prev + t * (cur - prev))
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
        poly = np.array(out) if out else np.empty((0, poly.shape[1]))
    return poly


def _scanline_fill(flips: np.ndarray, verts: np.ndarray) -> None:
    """Accumulate winding-number column flips for one projected polygon."""
    h = flips.shape[0]
    w = flips.shape[1] - 1
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if y0 == y1:
            continue
        sign = 1 if y1 > y0 else -1
        ylo, yhi = (y0, y1) if y0 < y1 else (y1, y0)
        # pixel-centre rows r + 0.5 crossed by the half-open edge span
        r0 = max(0, int(math.ceil(ylo - 0.5)))
        r1 = min(h - 1, int(math.ceil(yhi - 0.5)) - 1)
        if r1 < r0:
            continue
        rows = np.arange(r0, r1 + 1)
        xi = x0 + (rows + 0.5 - y0) * (x1 - x0) / (y1 - y0)
        cols = np.clip(np.ceil(xi - 0.5).astype(np.int64), 0, w)
        np.add.at(flips, (rows, cols), sign)


def render_mask(
    polys: list[RoadPolygon],
    cam: CameraModel,
    near: float = 1.0,
    far: float = 100.0,
) -> RoadMask:
    """Project ground strips through the camera and fill covered pixels.

    A pixel is road when its centre falls inside any projected polygon
    (non-zero winding); no anti-aliasing, output is exactly {0, 1}.
    """
    if np.linalg.matrix_rank(cam.P) < 3:
        raise DegenerateProjection("projection matrix rank < 3")
    h, w = cam.image_h, cam.image_w
    flips = np.zeros((h, w + 1), dtype=np.int32)
    M = cam.cam_from_velo()
    for poly in polys:
        n = len(poly.vertices)
        pts = np.column_stack(
            [
                poly.vertices[:, 0],
                poly.vertices[:, 1],
                np.full(n, cam.velo_ground_z),
                np.ones(n),
            ]
        )
        cam_pts = pts @ M.T
        clipped = _clip_depth(cam_pts[:, :3], cam_pts[:, 2], near, far)
        if len(clipped) < 3:
            continue
        homo = np.column_stack([clipped[:, :3], np.ones(len(clipped))])
        img = homo @ cam.P.T
        uv = img[:, :2] / img[:, 2:3]
        # Normalize orientation so overlapping strips accumulate, not cancel.
        x, y = uv[:, 0], uv[:, 1]
        area2 = float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        if area2 < 0:
            uv = uv[::-1]
        _scanline_fill(flips, uv)
    inside = np.cumsum(flips[:, :-1], axis=1) != 0
    return RoadMask(inside.astype(np.uint8), "binary")


def draw_pose_candidates(pose: VehiclePose, spec: PoseCandidateSpec) -> list[VehiclePose]:
    """Seeded viewpoint candidates around a pose. Gaussian mode uses
    sigma = half-range / 2, truncated to the range by re-sampling."""
    rng = np.random.default_rng(spec.seed)

    def draw(half: float) -> np.ndarray:
        if half == 0.0:
            return np.zeros(spec.n)
        if spec.distribution == "uniform":
            return rng.uniform(-half, half, spec.n)
        vals = rng.normal(0.0, half / 2.0, spec.n)
        bad = np.abs(vals) > half
        while bad.any():
            vals[bad] = rng.normal(0.0, half / 2.0, int(bad.sum()))
            bad = np.abs(vals) > half
        return vals

    ox = draw(spec.dx)
    oy = draw(spec.dy)
    ot = draw(spec.dtheta)
    out = []
    for j in range(spec.n):
        utm = UtmPoint(
            pose.utm.x + ox[j], pose.utm.y + oy[j], pose.utm.zone, pose.utm.hemisphere
        )
        out.append(
            dataclasses.replace(
                pose, utm=utm, heading_deg=(pose.heading_deg + ot[j]) % 360.0
            )
        )
    return out


def mean_of_masks(masks: list[RoadMask]) -> RoadMask:
    """Per-pixel average of binary masks: exact vote fraction k/n."""
    if not masks:
        raise ValueError("no masks to average")
    counts = np.zeros(masks[0].shape, dtype=np.int64)
    for m in masks:
        masks[0].same_shape(m)
        counts += m.data
    return RoadMask(counts / float(len(masks)), "confidence")


def candidates_mask(
    graph: OsmGraph,
    index: SpatialIndex,
    pose: VehiclePose,
    cam: CameraModel,
    spec: PoseCandidateSpec,
    render_cfg: RenderConfig | None = None,
    attr_cfg: AttributeConfig | None = None,
) -> RoadMask:
    """Average of the binary renders at n perturbed viewpoints: the value at a
    pixel is the fraction of candidates that see road there."""
    rc = render_cfg or RenderConfig()
    renders = []
    for cand in draw_pose_candidates(pose, spec):
        polys = build_road_polygons(graph, index, cand, rc.radius, rc.lane_width, attr_cfg)
        renders.append(render_mask(polys, cam, rc.near, rc.far))
    return mean_of_masks(renders)
