"""WGS84 -> UTM projection, planar geometry primitives, nearest-way-node queries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .osm import OsmGraph, highway_ways

# WGS84 ellipsoid
_A = 6378137.0
_F = 1.0 / 298.257223563
_K0 = 0.9996
_FALSE_EASTING = 500000.0
_FALSE_NORTHING_SOUTH = 10000000.0

# Krueger series coefficients in the third flattening n
_N = _F / (2.0 - _F)
_RECT_RADIUS = (_A / (1.0 + _N)) * (1.0 + _N**2 / 4.0 + _N**4 / 64.0)
_ALPHA = (
    _N / 2.0 - 2.0 * _N**2 / 3.0 + 5.0 * _N**3 / 16.0,
    13.0 * _N**2 / 48.0 - 3.0 * _N**3 / 5.0,
    61.0 * _N**3 / 240.0,
)


class OutOfBand(ValueError):
    """Latitude outside the UTM validity band (|lat| > 84 deg)."""


class ZoneMismatch(ValueError):
    """Operands lie in different UTM zones or hemispheres."""


class EmptyIndex(ValueError):
    """Spatial index holds no entries."""


class DegenerateSegment(ValueError):
    """Segment endpoints coincide."""


@dataclass(frozen=True)
class UtmPoint:
    x: float
    y: float
    zone: int
    hemisphere: str = "north"


@dataclass(frozen=True)
class VehiclePose:
    """Query point for all attribute and render operations.

    heading_deg is east-based counter-clockwise, normalized to [0, 360).
    """

    lat: float
    lon: float
    utm: UtmPoint
    heading_deg: float
    timestamp: float = 0.0


def utm_zone(lon: float) -> int:
    lon = ((lon + 180.0) % 360.0) - 180.0
    return int((lon + 180.0) // 6.0) + 1


def _check_same_frame(*points: UtmPoint) -> None:
    zones = {(p.zone, p.hemisphere) for p in points}
    if len(zones) > 1:
        raise ZoneMismatch(f"mixed UTM frames: {sorted(zones)}")


def to_utm_array(
    lat: np.ndarray, lon: np.ndarray, zone: int | None = None
) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorized WGS84 -> UTM. All inputs must share one zone unless forced."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) > 84.0):
        raise OutOfBand("latitude outside UTM band (|lat| <= 84)")
    if zone is None:
        zones = np.unique([utm_zone(v) for v in np.atleast_1d(lon)])
        if len(zones) > 1:
            raise ZoneMismatch(
                f"points span UTM zones {list(zones)}; pass an explicit zone"
            )
        zone = int(zones[0])
    lon0 = math.radians(zone * 6.0 - 183.0)

    phi = np.radians(lat)
    dlam = np.radians(lon) - lon0

    # Gauss-Krueger via conformal latitude (series in third flattening)
    c = 2.0 * math.sqrt(_N) / (1.0 + _N)
    t = np.sinh(np.arctanh(np.sin(phi)) - c * np.arctanh(c * np.sin(phi)))
    xi_p = np.arctan2(t, np.cos(dlam))
    eta_p = np.arcsinh(np.sin(dlam) / np.hypot(t, np.cos(dlam)))
    xi = xi_p.copy()
    eta = eta_p.copy()
    for j, a_j in enumerate(_ALPHA, start=1):
        xi += a_j * np.sin(2 * j * xi_p) * np.cosh(2 * j * eta_p)
        eta += a_j * np.cos(2 * j * xi_p) * np.sinh(2 * j * eta_p)
    x = _FALSE_EASTING + _K0 * _RECT_RADIUS * eta
    y = _K0 * _RECT_RADIUS * xi
    south = lat < 0.0
    y = np.where(south, y + _FALSE_NORTHING_SOUTH, y)
    return x, y, zone


def to_utm(lat: float, lon: float, zone: int | None = None) -> UtmPoint:
    """Project one WGS84 coordinate to UTM (0.9996 scale, 500 km false easting)."""
    x, y, z = to_utm_array(np.array([lat]), np.array([lon]), zone)
    hemi = "north" if lat >= 0.0 else "south"
    return UtmPoint(x=float(x[0]), y=float(y[0]), zone=z, hemisphere=hemi)


def make_pose(
    lat: float,
    lon: float,
    heading_east_deg: float,
    timestamp: float = 0.0,
    zone: int | None = None,
) -> VehiclePose:
    return VehiclePose(
        lat=lat,
        lon=lon,
        utm=to_utm(lat, lon, zone),
        heading_deg=heading_east_deg % 360.0,
        timestamp=timestamp,
    )


def load_poses(path, zone: int | None = None) -> list[VehiclePose]:
    """Read a pose file: one `timestamp lat lon heading_deg` line per pose.

    On-disk headings follow the GPS convention (north-based clockwise) and are
    converted to east-based counter-clockwise here.
    """
    poses = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ts, lat, lon, hdg = (float(v) for v in line.split())
            poses.append(make_pose(lat, lon, (90.0 - hdg) % 360.0, ts, zone))
    return poses


class SpatialIndex:
    """2-D index over the UTM positions of all highway-way nodes.

    Entries carry (node id, way id, position). Immutable after build.
    """

    def __init__(
        self,
        entries: list[tuple[int, int, int]],
        coords: np.ndarray,
        zone: int,
        hemisphere: str,
    ):
        self.entries = entries
        self.coords = coords
        self.zone = zone
        self.hemisphere = hemisphere
        self._tree = cKDTree(coords) if len(entries) else None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def node_rows(self) -> dict[int, int]:
        """First coords row per node id."""
        rows = getattr(self, "_node_rows_cache", None)
        if rows is None:
            rows = {}
            for i, (nid, _, _) in enumerate(self.entries):
                rows.setdefault(nid, i)
            self._node_rows_cache = rows
        return rows

    def entries_within(self, x: float, y: float, radius: float) -> list[int]:
        """Indices of entries within radius of (x, y)."""
        if self._tree is None:
            return []
        return self._tree.query_ball_point(np.array([x, y]), radius)


def build_spatial_index(graph: OsmGraph, zone: int | None = None) -> SpatialIndex:
    """Index exactly the nodes referenced by highway ways."""
    entries: list[tuple[int, int, int]] = []
    lats: list[float] = []
    lons: list[float] = []
    for wid in highway_ways(graph):
        way = graph.ways[wid]
        for pos, nid in enumerate(way.node_refs):
            node = graph.nodes[nid]
            entries.append((nid, wid, pos))
            lats.append(node.lat)
            lons.append(node.lon)
    if not entries:
        return SpatialIndex([], np.zeros((0, 2)), zone or 0, "north")
    xs, ys, z = to_utm_array(np.array(lats), np.array(lons), zone)
    hemi = "north" if lats[0] >= 0.0 else "south"
    return SpatialIndex(entries, np.column_stack([xs, ys]), z, hemi)


def nearest_way_node(index: SpatialIndex, p: UtmPoint) -> tuple[int, int, int]:
    """Entry minimizing Euclidean distance to p; exact ties go to the smallest
    (node id, way id, position) triple."""
    if len(index) == 0:
        raise EmptyIndex("spatial index is empty")
    if p.zone != index.zone or p.hemisphere != index.hemisphere:
        raise ZoneMismatch(
            f"query in zone {p.zone}/{p.hemisphere}, index in {index.zone}/{index.hemisphere}"
        )
    q = np.array([p.x, p.y])
    d, _ = index._tree.query(q)
    candidates = index._tree.query_ball_point(q, d + 1e-9)
    return min(index.entries[i] for i in candidates)


def point_segment_distance(p: UtmPoint, a: UtmPoint, b: UtmPoint) -> float:
    """Distance from p to the closed segment [a, b] (clamped projection)."""
    _check_same_frame(p, a, b)
    if a.x == b.x and a.y == b.y:
        raise DegenerateSegment("segment endpoints coincide")
    return float(
        point_segment_distance_xy(
            np.array([p.x, p.y]), np.array([a.x, a.y]), np.array([b.x, b.y])
        )
    )


def point_segment_distance_xy(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Planar-array variant of point_segment_distance."""
    ab = b - a
    denom = float(ab @ ab)
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    return float(np.hypot(*(p - (a + t * ab))))


def project_onto_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Foot of p on segment [a, b] and the clamped parameter t in [0, 1]."""
    ab = b - a
    t = float((p - a) @ ab) / float(ab @ ab)
    t = min(1.0, max(0.0, t))
    return a + t * ab, t
