"""Shared fixture builders: synthetic OSM extracts, exact-UTM road layouts,
and a miniature KITTI-style dataset for pipeline tests."""

from __future__ import annotations

import math

import numpy as np
import pytest

from roadfusion.geodesy import SpatialIndex, UtmPoint, VehiclePose
from roadfusion.osm import parse_osm

# Forward-projection constants for the crude inverse used by fixtures:
# metres-per-degree at the equator on the central meridian, UTM-scaled.
_M_PER_DEG_LAT = 110574.0
_M_PER_DEG_LON = 111319.49079327358 * 0.9996


def osm_doc(nodes: str = "", ways: str = "", relations: str = "") -> bytes:
    return f"<osm>\n{nodes}\n{ways}\n{relations}\n</osm>".encode()


def node_xml(nid: int, lat: float, lon: float, tags: dict | None = None) -> str:
    inner = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in (tags or {}).items())
    return f'<node id="{nid}" lat="{lat}" lon="{lon}">{inner}</node>'


def way_xml(wid: int, refs, tags: dict | None = None) -> str:
    nds = "".join(f'<nd ref="{r}"/>' for r in refs)
    tag = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in (tags or {}).items())
    return f'<way id="{wid}">{nds}{tag}</way>'


class UtmScene:
    """Synthetic road layout with exact planar coordinates.

    Ways are given directly in UTM metres near the zone-31 anchor
    (500000, 0); node lat/lon are derived with a crude linear inverse, good
    enough for the tag-level and angle-level code paths, while the spatial
    index and way cache carry the exact coordinates.
    """

    ANCHOR = np.array([500000.0, 0.0])
    ZONE = 31

    def __init__(self, ways: dict[int, list[tuple[float, float]]], tags: dict[int, dict] | None = None):
        tags = tags or {}
        self.coords_by_node: dict[int, np.ndarray] = {}
        node_xmls = []
        way_xmls = []
        nid = 0
        self.way_nodes: dict[int, list[int]] = {}
        seen: dict[tuple[float, float], int] = {}
        for wid in sorted(ways):
            refs = []
            for x, y in ways[wid]:
                key = (round(x, 6), round(y, 6))
                if key in seen:
                    refs.append(seen[key])
                    continue
                nid += 1
                seen[key] = nid
                self.coords_by_node[nid] = np.array([x, y], dtype=np.float64)
                lat = (y - self.ANCHOR[1]) / _M_PER_DEG_LAT
                lon = 3.0 + (x - self.ANCHOR[0]) / _M_PER_DEG_LON
                node_xmls.append(node_xml(nid, lat, lon))
                refs.append(nid)
            way_tags = {"highway": "residential"}
            way_tags.update(tags.get(wid, {}))
            way_xmls.append(way_xml(wid, refs, way_tags))
            self.way_nodes[wid] = refs

        self.graph = parse_osm(osm_doc("\n".join(node_xmls), "\n".join(way_xmls)))
        entries = []
        coords = []
        highway = sorted(
            w.id for w in self.graph.ways.values() if "highway" in w.tags
        )
        for wid in highway:
            for pos, ref in enumerate(self.graph.ways[wid].node_refs):
                entries.append((ref, wid, pos))
                coords.append(self.coords_by_node[ref])
        self.index = SpatialIndex(
            entries, np.array(coords).reshape(-1, 2), self.ZONE, "north"
        )
        self.cache = {
            wid: np.array([self.coords_by_node[r] for r in refs])
            for wid, refs in self.way_nodes.items()
        }

    def pose(self, x: float, y: float, heading_deg: float, ts: float = 0.0) -> VehiclePose:
        lat = (y - self.ANCHOR[1]) / _M_PER_DEG_LAT
        lon = 3.0 + (x - self.ANCHOR[0]) / _M_PER_DEG_LON
        return VehiclePose(
            lat=lat,
            lon=lon,
            utm=UtmPoint(float(x), float(y), self.ZONE, "north"),
            heading_deg=heading_deg % 360.0,
            timestamp=ts,
        )


@pytest.fixture
def crossing_scene() -> UtmScene:
    """Straight west-east road through a 4-way crossing at (500100, 0)."""
    cx = 500100.0
    return UtmScene(
        {
            1: [(cx - 80.0, 0.0), (cx - 40.0, 0.0), (cx, 0.0), (cx + 60.0, 0.0)],
            2: [(cx, -70.0), (cx, 0.0)],
            3: [(cx, 0.0), (cx, 70.0)],
            4: [(cx, 0.0), (cx + 50.0, 50.0)],
        }
    )


def quadrant_bearing(dx: float, dy: float) -> float:
    """Independent east-based CCW bearing built quadrant by quadrant."""
    if dx == 0.0 and dy == 0.0:
        raise ValueError("undefined")
    if dx == 0.0:
        return 90.0 if dy > 0 else 270.0
    if dy == 0.0:
        return 0.0 if dx > 0 else 180.0
    base = math.degrees(math.atan(abs(dy) / abs(dx)))
    if dx > 0 and dy > 0:
        return base
    if dx < 0 and dy > 0:
        return 180.0 - base
    if dx < 0 and dy < 0:
        return 180.0 + base
    return 360.0 - base


# ---------------------------------------------------------------------------
# miniature KITTI-style dataset
# ---------------------------------------------------------------------------

MINI_W, MINI_H = 160, 120
MINI_FOCAL, MINI_CX, MINI_CY = 100.0, 79.5, 59.5
MINI_CAM_HEIGHT = 1.2


def _mini_calib_text() -> str:
    from roadfusion.camera import synthetic_camera

    cam = synthetic_camera(MINI_W, MINI_H, MINI_FOCAL, MINI_CX, MINI_CY, MINI_CAM_HEIGHT)
    p2 = " ".join(f"{v:.10g}" for v in cam.P.ravel())
    r0 = " ".join(f"{v:.10g}" for v in np.eye(3).ravel())
    tr = " ".join(f"{v:.10g}" for v in cam.T_velo_cam[:3].ravel())
    return f"P2: {p2}\nR0_rect: {r0}\nTr_velo_to_cam: {tr}\n"


def _mini_image(seed: int) -> np.ndarray:
    """Driving-like frame: textured surroundings, dark road wedge, lane lines."""
    import cv2

    rng = np.random.default_rng(seed)
    img = np.zeros((MINI_H, MINI_W, 3), dtype=np.uint8)
    img[: MINI_H // 2] = (140, 170, 220)  # sky
    img[MINI_H // 2 :] = (90, 150, 70)  # grass
    img += rng.integers(0, 12, size=img.shape, dtype=np.uint8)
    horizon = int(0.58 * MINI_H)
    road = np.array(
        [[10, MINI_H - 1], [MINI_W - 10, MINI_H - 1], [MINI_CX + 14, horizon], [MINI_CX - 14, horizon]],
        dtype=np.int32,
    )
    cv2.fillPoly(img, [road], (72, 74, 78))
    cv2.line(img, (30, MINI_H - 1), (int(MINI_CX) - 8, horizon), (250, 250, 250), 2)
    cv2.line(img, (MINI_W - 30, MINI_H - 1), (int(MINI_CX) + 8, horizon), (250, 250, 250), 2)
    return img


def _mini_gt() -> np.ndarray:
    import cv2

    gt = np.zeros((MINI_H, MINI_W, 3), dtype=np.uint8)
    horizon = int(0.58 * MINI_H)
    road = np.array(
        [[10, MINI_H - 1], [MINI_W - 10, MINI_H - 1], [MINI_CX + 14, horizon], [MINI_CX - 14, horizon]],
        dtype=np.int32,
    )
    cv2.fillPoly(gt, [road], (255, 0, 255))
    return gt


def _mini_cloud(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = 2500
    ground = np.column_stack(
        [
            rng.uniform(1.5, 40.0, n),
            rng.uniform(-12.0, 12.0, n),
            np.zeros(n),
            rng.uniform(0, 1, n),
        ]
    )
    nb = 300
    box = np.column_stack(
        [
            rng.uniform(8.0, 9.5, nb),
            rng.uniform(-4.0, -2.5, nb),
            rng.uniform(0.5, 1.8, nb),
            rng.uniform(0, 1, nb),
        ]
    )
    return np.vstack([ground, box]).astype(np.float32)


def build_mini_dataset(root, frames=("um_000000", "umm_000001", "uu_000002"), with_velodyne=True):
    """Write a small KITTI-shaped dataset and a config JSON; returns the config path."""
    import json

    from PIL import Image

    root = str(root)
    dirs = {
        name: f"{root}/{name}"
        for name in ("image_2", "calib", "velodyne", "gt_image_2")
    }
    import os

    for d in dirs.values():
        os.makedirs(d, exist_ok=True)

    # straight road running grid-east through the poses, plus a crossing way
    lat_per_m = 1.0 / _M_PER_DEG_LAT
    lon_per_m = 1.0 / _M_PER_DEG_LON
    nodes = []
    road_y = 0.0
    xs = [-60.0, 0.0, 60.0, 120.0, 180.0]
    for i, x in enumerate(xs, start=1):
        nodes.append(node_xml(i, road_y * lat_per_m, 3.0 + x * lon_per_m))
    nodes.append(node_xml(50, -50.0 * lat_per_m, 3.0 + 120.0 * lon_per_m))
    nodes.append(node_xml(51, 50.0 * lat_per_m, 3.0 + 120.0 * lon_per_m))
    ways = [
        way_xml(100, [1, 2, 3, 4, 5], {"highway": "residential", "lanes": "2"}),
        way_xml(101, [50, 4, 51], {"highway": "service"}),
    ]
    osm_path = f"{root}/map.osm"
    with open(osm_path, "wb") as fh:
        fh.write(osm_doc("\n".join(nodes), "\n".join(ways)))

    # poses: one per frame, east-bound (GPS disk heading 90 = east)
    pose_path = f"{root}/poses.txt"
    with open(pose_path, "w") as fh:
        for i, _ in enumerate(frames):
            x = 10.0 + 30.0 * i
            fh.write(f"{float(i)} {road_y * lat_per_m} {3.0 + x * lon_per_m} 90.0\n")

    calib_text = _mini_calib_text()
    for i, frame in enumerate(frames):
        Image.fromarray(_mini_image(100 + i)).save(f"{dirs['image_2']}/{frame}.png")
        with open(f"{dirs['calib']}/{frame}.txt", "w") as fh:
            fh.write(calib_text)
        Image.fromarray(_mini_gt()).save(f"{dirs['gt_image_2']}/{frame}.png")
        if with_velodyne:
            _mini_cloud(200 + i).tofile(f"{dirs['velodyne']}/{frame}.bin")

    config = {
        "paths": {
            "osm": osm_path,
            "poses": pose_path,
            "images": dirs["image_2"],
            "calib": dirs["calib"],
            "velodyne": dirs["velodyne"],
            "gt": dirs["gt_image_2"],
            "output": f"{root}/out",
        },
        "seed": 7,
        "jobs": 1,
        "lidar_height": 0.0,
        "candidates": {"n": 12, "dx": 1.0, "dy": 1.0, "dtheta": 10.0},
        "superpixel": {"k": 150},
        "render": {"radius": 120.0},
    }
    config_path = f"{root}/config.json"
    with open(config_path, "w") as fh:
        json.dump(config, fh, indent=2)
    return config_path
