"""Per-pose driving-scenario attributes: direct tag reads plus geometric quantities.

The record has four direct fields (one-way flag, lane count, per-lane turn
directions, road class) and eight indirect ones (speed limit, intersection
type, at-intersection flag, arc distance to the intersection, bearing to it,
road curvature, heading, lateral offset from the road centerline).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geodesy import (
    SpatialIndex,
    UtmPoint,
    VehiclePose,
    nearest_way_node,
    point_segment_distance_xy,
    project_onto_segment,
    to_utm_array,
    utm_zone,
)
from .osm import OsmGraph


class UnknownNode(KeyError):
    pass


class CoincidentPoints(ValueError):
    pass


class NoIntersectionAhead(ValueError):
    """N0 and N1 do not share a way."""


class LengthMismatch(ValueError):
    pass


class RoadType(IntEnum):
    RESIDENTIAL = 0
    TERTIARY = 1
    SECONDARY = 2
    SERVICE = 3
    UNCLASSIFIED = 4
    OTHER = 5


class IntersectionType(IntEnum):
    NONE = 0
    CROSSING = 1
    T_JUNCTION = 2
    TURNING = 3
    MERGE = 4
    EXIT = 5


# Per-lane turn-direction codes.
LANE_LEFT = 0
LANE_LEFT_THROUGH = 1
LANE_THROUGH = 2
LANE_THROUGH_RIGHT = 3
LANE_RIGHT = 4
LANE_LEFT_RIGHT = 5
LANE_ALL = 6

_ROAD_TYPES = {
    "residential": RoadType.RESIDENTIAL,
    "tertiary": RoadType.TERTIARY,
    "secondary": RoadType.SECONDARY,
    "service": RoadType.SERVICE,
    "unclassified": RoadType.UNCLASSIFIED,
}

_ONEWAY_TRUE = {"yes", "true", "1", "-1"}


@dataclass
class AttributeConfig:
    """Defaults for tags the extract does not supply, plus search thresholds."""

    at_intersection_radius: float = 10.0
    search_limit: float = 200.0
    turning_bend_deg: float = 30.0
    default_lanes_twoway: int = 2
    default_lanes_oneway: int = 1
    default_speed: dict[RoadType, float] = field(
        default_factory=lambda: {
            RoadType.RESIDENTIAL: 30.0,
            RoadType.TERTIARY: 50.0,
            RoadType.SECONDARY: 60.0,
            RoadType.SERVICE: 20.0,
            RoadType.UNCLASSIFIED: 50.0,
            RoadType.OTHER: 50.0,
        }
    )
    signed_curvature: bool = False


@dataclass(frozen=True)
class DirectAttributes:
    one_way: bool
    num_lanes: int
    lane_directions: tuple[int, ...]
    road_type: RoadType


@dataclass(frozen=True)
class IndirectAttributes:
    speed_limit: float
    intersection_type: IntersectionType
    at_intersection: bool
    dist_to_intersection: float | None
    bearing_to_intersection: float | None
    road_curvature: float
    heading: float
    dist_to_center: float


@dataclass(frozen=True)
class SceneAttributes:
    direct: DirectAttributes
    indirect: IndirectAttributes
    anchor_node: int
    anchor_way: int
    intersection_node: int | None
    next_node: int | None


def _lane_code(token: str) -> int:
    parts = {p for p in token.split(";")}
    left = any("left" in p for p in parts)
    right = any("right" in p for p in parts)
    through = ("through" in parts) or not (left or right)
    if left and right:
        return LANE_ALL if through else LANE_LEFT_RIGHT
    if left:
        return LANE_LEFT_THROUGH if through else LANE_LEFT
    if right:
        return LANE_THROUGH_RIGHT if through else LANE_RIGHT
    return LANE_THROUGH


def parse_direct(
    graph: OsmGraph, way: int, cfg: AttributeConfig | None = None
) -> DirectAttributes:
    """Read the four direct attributes off a highway way's tags.

    Missing tags take the configured defaults; a malformed `lanes` value is
    treated as missing.
    """
    cfg = cfg or AttributeConfig()
    tags = graph.ways[way].tags
    one_way = tags.get("oneway", "no").lower() in _ONEWAY_TRUE

    directions: tuple[int, ...] = ()
    if "turn:lanes" in tags:
        directions = tuple(_lane_code(t) for t in tags["turn:lanes"].split("|"))

    num_lanes = None
    if "lanes" in tags:
        try:
            num_lanes = max(1, int(float(tags["lanes"])))
        except ValueError:
            num_lanes = None
    if num_lanes is None:
        if directions:
            num_lanes = len(directions)
        else:
            num_lanes = cfg.default_lanes_oneway if one_way else cfg.default_lanes_twoway

    if directions and len(directions) != num_lanes:
        directions = (directions + (LANE_THROUGH,) * num_lanes)[:num_lanes]

    road_type = _ROAD_TYPES.get(tags.get("highway", ""), RoadType.OTHER)
    return DirectAttributes(one_way, num_lanes, directions, road_type)


def _node_xy(graph: OsmGraph, zone: int, node_ids) -> np.ndarray:
    lats = np.array([graph.nodes[n].lat for n in node_ids])
    lons = np.array([graph.nodes[n].lon for n in node_ids])
    xs, ys, _ = to_utm_array(lats, lons, zone)
    return np.column_stack([xs, ys])


def _way_xy(graph: OsmGraph, zone: int, way_id: int, cache: dict | None = None) -> np.ndarray:
    if cache is not None and way_id in cache:
        return cache[way_id]
    xy = _node_xy(graph, zone, graph.ways[way_id].node_refs)
    if cache is not None:
        cache[way_id] = xy
    return xy


def _incident_branches(graph: OsmGraph, node: int) -> list[tuple[int, int, bool]]:
    """Road segments meeting at a node as (way id, neighbor node id, outbound)
    triples; outbound means node_refs order leaves the node along this branch."""
    branches = []
    for wid, pos in graph.ways_through_node(node):
        way = graph.ways[wid]
        if "highway" not in way.tags:
            continue
        if pos > 0:
            branches.append((wid, way.node_refs[pos - 1], False))
        if pos < len(way.node_refs) - 1:
            branches.append((wid, way.node_refs[pos + 1], True))
    return branches


def classify_intersection(
    graph: OsmGraph, node: int, cfg: AttributeConfig | None = None, zone: int | None = None
) -> IntersectionType:
    """Type of the junction at a node, from its incident road branches.

    Branch degree drives the split: a through-node of one way is no junction,
    two ways joined end-to-end form a turning when the bend exceeds the
    threshold, three branches give T-junction/merge/exit depending on one-way
    flow, four or more give a crossing.
    """
    if node not in graph.nodes:
        raise UnknownNode(node)
    cfg = cfg or AttributeConfig()
    branches = _incident_branches(graph, node)
    degree = len(branches)
    if degree <= 1:
        return IntersectionType.NONE

    if degree == 2:
        (wid_a, na, _), (wid_b, nb, _) = branches
        if wid_a == wid_b:
            return IntersectionType.NONE
        xy = _node_xy(graph, zone or _local_zone(graph, node), [na, node, nb])
        u = xy[1] - xy[0]
        v = xy[2] - xy[1]
        bend = _angle_between(u, v)
        if bend > cfg.turning_bend_deg:
            return IntersectionType.TURNING
        return IntersectionType.NONE

    if degree == 3:
        flows = []
        for wid, _, outbound in branches:
            tag = graph.ways[wid].tags.get("oneway", "no").lower()
            if tag in ("yes", "true", "1"):
                flows.append("out" if outbound else "in")
            elif tag == "-1":
                flows.append("in" if outbound else "out")
            else:
                flows.append("both")
        if "both" not in flows:
            n_in = flows.count("in")
            if n_in == 2:
                return IntersectionType.MERGE
            if n_in == 1:
                return IntersectionType.EXIT
        return IntersectionType.T_JUNCTION

    return IntersectionType.CROSSING


def _local_zone(graph: OsmGraph, node: int) -> int:
    return utm_zone(graph.nodes[node].lon)


def _angle_between(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise CoincidentPoints("zero-length direction")
    cosang = np.clip(float(u @ v) / (nu * nv), -1.0, 1.0)
    return math.degrees(math.acos(cosang))


def bearing_angle(pose_utm: UtmPoint, target_utm: UtmPoint) -> float:
    """East-based counter-clockwise angle of (target - pose), in [0, 360)."""
    dx = target_utm.x - pose_utm.x
    dy = target_utm.y - pose_utm.y
    if dx == 0.0 and dy == 0.0:
        raise CoincidentPoints("bearing of coincident points")
    return math.degrees(math.atan2(dy, dx)) % 360.0


def road_curvature(
    n0_utm: np.ndarray, n2_utm: np.ndarray, prev_segment_dir: np.ndarray, signed: bool = False
) -> float:
    """Angle between the incoming segment direction at the anchor node and the
    direction to the next node in front. Unsigned in [0, 180] by default;
    signed variant is positive for a left bend."""
    v = np.asarray(n2_utm, dtype=float) - np.asarray(n0_utm, dtype=float)
    u = np.asarray(prev_segment_dir, dtype=float)
    ang = _angle_between(u, v)
    if not signed:
        return ang
    cross = u[0] * v[1] - u[1] * v[0]
    return ang if cross >= 0.0 else -ang


def distance_to_intersection(
    graph: OsmGraph,
    pose: VehiclePose,
    n0: int,
    n1: int,
    way_id: int | None = None,
    cache: dict | None = None,
) -> float:
    """Arc length along the way from the pose's perpendicular foot to node n1.

    The foot is taken on whichever segment adjacent to n0 lies closest to the
    pose; the distance then follows the node chain toward n1, so it exceeds
    the straight-line distance whenever the road bends.
    """
    if n0 not in graph.nodes or n1 not in graph.nodes:
        raise UnknownNode((n0, n1))
    common = [
        wid
        for wid, _ in graph.ways_through_node(n0)
        if any(w == wid for w, _ in graph.ways_through_node(n1))
    ]
    if way_id is not None:
        common = [w for w in common if w == way_id]
    if not common:
        raise NoIntersectionAhead(f"nodes {n0} and {n1} share no way")
    wid = min(common)
    refs = graph.ways[wid].node_refs
    pos0 = refs.index(n0)
    pos1 = refs.index(n1)

    zone = _local_zone(graph, n0)
    xy = _way_xy(graph, zone, wid, cache)
    if pose.utm.zone == zone:
        p = np.array([pose.utm.x, pose.utm.y])
    else:
        px, py, _ = to_utm_array(np.array([pose.lat]), np.array([pose.lon]), zone)
        p = np.array([px[0], py[0]])

    foot, seg = _foot_near_node(xy, pos0, p, pos1)
    step = 1 if pos1 >= pos0 else -1
    if pos1 == pos0:
        return float(np.hypot(*(foot - xy[pos0])))
    first = seg[1] if step == 1 else seg[0]
    # Foot lies on the segment behind the anchor: walk through the anchor.
    if (step == 1 and first > pos1) or (step == -1 and first < pos1):
        first = pos0
    dist = float(np.hypot(*(foot - xy[first])))
    k = first
    while k != pos1:
        dist += float(np.hypot(*(xy[k + step] - xy[k])))
        k += step
    return dist


def _foot_near_node(
    xy: np.ndarray, pos: int, p: np.ndarray, toward: int
) -> tuple[np.ndarray, tuple[int, int]]:
    """Perpendicular foot of p on the closest of the segments adjacent to
    node index pos; ties prefer the segment on the `toward` side."""
    segs = []
    if pos < len(xy) - 1:
        segs.append((pos, pos + 1))
    if pos > 0:
        segs.append((pos - 1, pos))
    if toward < pos:
        segs.reverse()
    best = None
    for i, j in segs:
        if np.array_equal(xy[i], xy[j]):
            continue
        d = point_segment_distance_xy(p, xy[i], xy[j])
        if best is None or d < best[0] - 1e-12:
            foot, _ = project_onto_segment(p, xy[i], xy[j])
            best = (d, foot, (i, j))
    if best is None:
        return xy[pos].copy(), (pos, pos)
    return best[1], best[2]


def scene_attributes(
    graph: OsmGraph,
    index: SpatialIndex,
    pose: VehiclePose,
    cfg: AttributeConfig | None = None,
    cache: dict | None = None,
) -> SceneAttributes:
    """Full attribute record for one pose.

    Finds the nearest highway-way node (N0), walks the way in the travel
    direction for the first junction node (N1, within the search limit), takes
    the next way node in front (N2), and composes the direct and indirect
    fields. Sub-failures surface as unset optional fields, never exceptions.
    """
    cfg = cfg or AttributeConfig()
    nid, wid, pos = nearest_way_node(index, pose.utm)
    direct = parse_direct(graph, wid, cfg)

    refs = graph.ways[wid].node_refs
    xy = _way_xy(graph, index.zone, wid, cache)
    p = np.array([pose.utm.x, pose.utm.y])
    heading_rad = math.radians(pose.heading_deg)
    h = np.array([math.cos(heading_rad), math.sin(heading_rad)])

    # Travel direction along the way: the orientation best aligned with heading.
    ref_dir = xy[pos + 1] - xy[pos] if pos < len(xy) - 1 else xy[pos] - xy[pos - 1]
    step = 1 if float(ref_dir @ h) >= 0.0 else -1

    # Lateral offset to the nearest adjacent segment (d3) and its foot.
    d3, foot, foot_seg = _closest_adjacent_segment(xy, pos, p)

    # Walk forward for the first junction node.
    n1_id = None
    n1_dist = None
    first = foot_seg[1] if step == 1 else foot_seg[0]
    walk = [first]
    back = foot_seg[0] if step == 1 else foot_seg[1]
    if np.hypot(*(foot - xy[back])) < 1e-9:
        walk.insert(0, back)
    arc = 0.0
    prev_xy = foot
    k = walk[0]
    while True:
        arc += float(np.hypot(*(xy[k] - prev_xy)))
        if arc > cfg.search_limit:
            break
        if classify_intersection(graph, refs[k], cfg, index.zone) != IntersectionType.NONE:
            n1_id = refs[k]
            n1_dist = arc
            break
        prev_xy = xy[k]
        k += step
        if k < 0 or k >= len(xy):
            break

    # Bearing is taken from the vehicle position toward the junction node (the
    # anchor node and the junction can coincide when the junction is nearest).
    itype = IntersectionType.NONE
    bearing = None
    if n1_id is not None:
        itype = classify_intersection(graph, n1_id, cfg, index.zone)
        n1_xy = xy[refs.index(n1_id)]
        if not np.allclose(n1_xy, p):
            bearing = math.degrees(math.atan2(n1_xy[1] - p[1], n1_xy[0] - p[0])) % 360.0

    # Next node in front (N2) and the curvature at N0.
    n2_idx = pos + step
    n2_id = refs[n2_idx] if 0 <= n2_idx < len(refs) else None
    curvature = 0.0
    if n2_id is not None:
        prev_idx = pos - step
        prev_dir = xy[pos] - xy[prev_idx] if 0 <= prev_idx < len(xy) else h
        if np.linalg.norm(prev_dir) == 0.0 or np.allclose(xy[n2_idx], xy[pos]):
            curvature = 0.0
        else:
            curvature = road_curvature(xy[pos], xy[n2_idx], prev_dir, cfg.signed_curvature)

    speed = _speed_limit(graph.ways[wid].tags, direct.road_type, cfg)
    indirect = IndirectAttributes(
        speed_limit=speed,
        intersection_type=itype,
        at_intersection=n1_dist is not None and n1_dist < cfg.at_intersection_radius,
        dist_to_intersection=n1_dist,
        bearing_to_intersection=bearing,
        road_curvature=curvature,
        heading=pose.heading_deg,
        dist_to_center=d3,
    )
    return SceneAttributes(
        direct=direct,
        indirect=indirect,
        anchor_node=nid,
        anchor_way=wid,
        intersection_node=n1_id,
        next_node=n2_id,
    )


def _closest_adjacent_segment(
    xy: np.ndarray, pos: int, p: np.ndarray
) -> tuple[float, np.ndarray, tuple[int, int]]:
    best = None
    for i, j in ((pos, pos + 1), (pos - 1, pos)):
        if i < 0 or j > len(xy) - 1:
            continue
        if np.array_equal(xy[i], xy[j]):
            continue
        d = point_segment_distance_xy(p, xy[i], xy[j])
        if best is None or d < best[0]:
            foot, _ = project_onto_segment(p, xy[i], xy[j])
            best = (d, foot, (i, j))
    if best is None:
        # Degenerate way (all nodes coincident): offset straight to the node.
        return float(np.hypot(*(p - xy[pos]))), xy[pos].copy(), (pos, pos)
    return best


def _speed_limit(tags: dict[str, str], road_type: RoadType, cfg: AttributeConfig) -> float:
    raw = tags.get("maxspeed", "").strip().lower()
    if raw:
        mph = raw.endswith("mph")
        raw = raw.removesuffix("mph").strip()
        try:
            value = float(raw)
            return value * 1.609344 if mph else value
        except ValueError:
            pass
    return cfg.default_speed[road_type]


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

ATTRIBUTE_FIELDS = (
    "one_way",
    "num_lanes",
    "lane_directions",
    "road_type",
    "speed_limit",
    "intersection_type",
    "at_intersection",
    "dist_to_intersection",
    "bearing_to_intersection",
    "road_curvature",
    "heading",
    "dist_to_center",
)

DYNAMICS_FIELDS = (
    "accel_x",
    "accel_y",
    "accel_z",
    "rot_x",
    "rot_y",
    "rot_z",
    "speed",
    "gps_heading",
    "dyn_r0",
    "dyn_r1",
    "dyn_r2",
    "dyn_r3",
    "dyn_r4",
)


def _pack_lane_directions(directions: tuple[int, ...]) -> int:
    """Injective numeric packing of the per-lane codes (base-8 positional)."""
    value = 0
    for i, d in enumerate(directions):
        value += (d + 1) * 8**i
    return value


def attribute_numeric_row(rec: SceneAttributes) -> list[float]:
    """The 12 attribute slots as numbers; unset optionals become -1."""
    ind = rec.indirect
    return [
        float(rec.direct.one_way),
        float(rec.direct.num_lanes),
        float(_pack_lane_directions(rec.direct.lane_directions)),
        float(int(rec.direct.road_type)),
        float(ind.speed_limit),
        float(int(ind.intersection_type)),
        float(ind.at_intersection),
        -1.0 if ind.dist_to_intersection is None else float(ind.dist_to_intersection),
        -1.0 if ind.bearing_to_intersection is None else float(ind.bearing_to_intersection),
        float(ind.road_curvature),
        float(ind.heading),
        float(ind.dist_to_center),
    ]


def export_features(records, dynamics, path) -> None:
    """Write the per-frame feature file: 13 dynamics columns then the 12
    attribute columns, 25 in total."""
    records = list(records)
    if dynamics is None:
        dynamics = [[0.0] * len(DYNAMICS_FIELDS) for _ in records]
    dynamics = [list(d) for d in dynamics]
    if len(dynamics) != len(records):
        raise LengthMismatch(f"{len(records)} records vs {len(dynamics)} dynamics rows")
    for d in dynamics:
        if len(d) != len(DYNAMICS_FIELDS):
            raise LengthMismatch(f"dynamics row has {len(d)} values, expected 13")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DYNAMICS_FIELDS + ATTRIBUTE_FIELDS)
        for rec, dyn in zip(records, dynamics):
            writer.writerow([f"{v:.6f}" for v in list(dyn) + attribute_numeric_row(rec)])


def write_attributes_csv(records, path) -> None:
    """Human-readable attribute table: enums as lowercase strings, unset blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTRIBUTE_FIELDS)
        for rec in records:
            ind = rec.indirect
            writer.writerow(
                [
                    str(rec.direct.one_way).lower(),
                    rec.direct.num_lanes,
                    "|".join(str(d) for d in rec.direct.lane_directions),
                    rec.direct.road_type.name.lower(),
                    f"{ind.speed_limit:g}",
                    ind.intersection_type.name.lower(),
                    str(ind.at_intersection).lower(),
                    "" if ind.dist_to_intersection is None else f"{ind.dist_to_intersection:.3f}",
                    "" if ind.bearing_to_intersection is None else f"{ind.bearing_to_intersection:.3f}",
                    f"{ind.road_curvature:.3f}",
                    f"{ind.heading:.3f}",
                    f"{ind.dist_to_center:.3f}",
                ]
            )
