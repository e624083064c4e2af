import math

import numpy as np
import pytest

from roadfusion.geodesy import (
    DegenerateSegment,
    EmptyIndex,
    OutOfBand,
    SpatialIndex,
    UtmPoint,
    ZoneMismatch,
    build_spatial_index,
    load_poses,
    make_pose,
    nearest_way_node,
    point_segment_distance,
    point_segment_distance_xy,
    to_utm,
    utm_zone,
)
from roadfusion.osm import parse_osm

from conftest import node_xml, osm_doc, way_xml

# ---------------------------------------------------------------------------
# Independent transverse-Mercator oracle (Hoffmann-Wellenhof series, a
# different formulation from the implementation's conformal-latitude series).
# ---------------------------------------------------------------------------

_A = 6378137.0
_B = 6356752.314140356


def _arc_length(phi: float) -> float:
    n = (_A - _B) / (_A + _B)
    alpha = ((_A + _B) / 2) * (1 + n**2 / 4 + n**4 / 64)
    beta = -3 * n / 2 + 9 * n**3 / 16 - 3 * n**5 / 32
    gamma = 15 * n**2 / 16 - 15 * n**4 / 32
    delta = -35 * n**3 / 48 + 105 * n**5 / 256
    eps = 315 * n**4 / 512
    return alpha * (
        phi
        + beta * math.sin(2 * phi)
        + gamma * math.sin(4 * phi)
        + delta * math.sin(6 * phi)
        + eps * math.sin(8 * phi)
    )


def oracle_utm(lat: float, lon: float) -> tuple[float, float, int]:
    zone = int((lon + 180) // 6) + 1
    lam0 = math.radians(zone * 6 - 183)
    phi, lam = math.radians(lat), math.radians(lon)
    ep2 = (_A**2 - _B**2) / _B**2
    nu2 = ep2 * math.cos(phi) ** 2
    big_n = _A**2 / (_B * math.sqrt(1 + nu2))
    t = math.tan(phi)
    t2 = t * t
    dl = lam - lam0
    c = math.cos(phi)
    l3 = 1 - t2 + nu2
    l4 = 5 - t2 + 9 * nu2 + 4 * nu2 * nu2
    l5 = 5 - 18 * t2 + t2 * t2 + 14 * nu2 - 58 * t2 * nu2
    l6 = 61 - 58 * t2 + t2 * t2 + 270 * nu2 - 330 * t2 * nu2
    l7 = 61 - 479 * t2 + 179 * t2 * t2 - t2**3
    l8 = 1385 - 3111 * t2 + 543 * t2 * t2 - t2**3
    x = (
        big_n * c * dl
        + big_n / 6 * c**3 * l3 * dl**3
        + big_n / 120 * c**5 * l5 * dl**5
        + big_n / 5040 * c**7 * l7 * dl**7
    )
    y = (
        _arc_length(phi)
        + t / 2 * big_n * c**2 * dl**2
        + t / 24 * big_n * c**4 * l4 * dl**4
        + t / 720 * big_n * c**6 * l6 * dl**6
        + t / 40320 * big_n * c**8 * l8 * dl**8
    )
    x = x * 0.9996 + 500000.0
    y = y * 0.9996
    if y < 0:
        y += 10000000.0
    return x, y, zone


def ellipsoid_step(lat: float, lon: float, azimuth_deg: float, dist_m: float):
    """Second point dist_m away along an azimuth, via local ellipsoid radii.

    For 100 m steps the local-radii formula is exact to roughly (d/R)^2,
    far below the tolerances asserted here.
    """
    phi = math.radians(lat)
    e2 = 1 - (_B / _A) ** 2
    m_rad = _A * (1 - e2) / (1 - e2 * math.sin(phi) ** 2) ** 1.5
    n_rad = _A / math.sqrt(1 - e2 * math.sin(phi) ** 2)
    az = math.radians(azimuth_deg)
    dlat = dist_m * math.cos(az) / m_rad
    dlon = dist_m * math.sin(az) / (n_rad * math.cos(phi))
    return lat + math.degrees(dlat), lon + math.degrees(dlon)


# ---------------------------------------------------------------------------
# to_utm
# ---------------------------------------------------------------------------


def test_central_meridian_equator():
    p = to_utm(0.0, 3.0)
    assert p.zone == 31
    assert p.hemisphere == "north"
    assert p.x == pytest.approx(500000.0, abs=1e-6)
    assert p.y == pytest.approx(0.0, abs=1e-6)


def test_karlsruhe_reference():
    # frozen from the independent series oracle before the implementation ran
    p = to_utm(49.011, 8.417)
    assert p.zone == 32
    assert abs(p.x - 457367.4012) < 0.01
    assert abs(p.y - 5428842.3259) < 0.01


def test_zone_boundary():
    assert to_utm(0.0, 5.999).zone == 31
    assert to_utm(0.0, 6.001).zone == 32
    assert utm_zone(-180.0) == 1
    assert utm_zone(179.999) == 60


def test_out_of_band():
    with pytest.raises(OutOfBand):
        to_utm(85.0, 10.0)
    with pytest.raises(OutOfBand):
        to_utm(-84.5, 10.0)


def test_to_utm_matches_oracle_randomized():
    rng = np.random.default_rng(11)
    for _ in range(500):
        lat = rng.uniform(-80.0, 80.0)
        lon = rng.uniform(-179.9, 179.9)
        p = to_utm(lat, lon)
        ox, oy, oz = oracle_utm(lat, lon)
        assert p.zone == oz
        assert abs(p.x - ox) < 0.01
        assert abs(p.y - oy) < 0.01


def test_local_distance_preservation():
    rng = np.random.default_rng(12)
    for _ in range(200):
        zone_mid = rng.integers(1, 61) * 6.0 - 183.0
        lat = rng.uniform(-70.0, 70.0)
        lon = zone_mid + rng.uniform(-2.5, 2.5)
        lat2, lon2 = ellipsoid_step(lat, lon, rng.uniform(0, 360), 100.0)
        a = to_utm(lat, lon)
        b = to_utm(lat2, lon2, zone=a.zone)
        d = math.hypot(a.x - b.x, a.y - b.y)
        assert abs(d - 100.0) / 100.0 < 1e-3


def test_south_hemisphere_false_northing():
    p = to_utm(-33.9, 151.2)
    assert p.hemisphere == "south"
    assert p.y > 6_000_000


# ---------------------------------------------------------------------------
# nearest_way_node
# ---------------------------------------------------------------------------


def _make_index(coords: np.ndarray, node_ids=None) -> SpatialIndex:
    n = len(coords)
    node_ids = node_ids if node_ids is not None else list(range(1, n + 1))
    entries = [(int(node_ids[i]), 100, i) for i in range(n)]
    return SpatialIndex(entries, np.asarray(coords, dtype=float), 31, "north")


def test_single_node_index():
    idx = _make_index(np.array([[500010.0, 20.0]]))
    hit = nearest_way_node(idx, UtmPoint(400000.0, 90000.0, 31, "north"))
    assert hit == (1, 100, 0)


def test_exact_position_hit():
    coords = np.array([[500000.0, 0.0], [500050.0, 10.0], [500100.0, -5.0]])
    idx = _make_index(coords)
    hit = nearest_way_node(idx, UtmPoint(500050.0, 10.0, 31, "north"))
    assert hit == (2, 100, 1)


def test_nearest_matches_linear_scan():
    rng = np.random.default_rng(13)
    for _ in range(20):
        coords = rng.uniform(0, 1000, size=(50, 2)) + [500000.0, 0.0]
        idx = _make_index(coords)
        for _ in range(60):
            q = rng.uniform(0, 1000, size=2) + [500000.0, 0.0]
            hit = nearest_way_node(idx, UtmPoint(q[0], q[1], 31, "north"))
            d = np.hypot(*(coords - q).T)
            assert hit[2] == int(np.argmin(d))


def test_tie_breaks_to_smallest_node_id():
    coords = np.array([[500000.0, 10.0], [500000.0, -10.0]])
    idx = _make_index(coords, node_ids=[42, 7])
    hit = nearest_way_node(idx, UtmPoint(500000.0, 0.0, 31, "north"))
    assert hit[0] == 7


def test_empty_index_and_zone_mismatch():
    idx = _make_index(np.zeros((0, 2)))
    with pytest.raises(EmptyIndex):
        nearest_way_node(idx, UtmPoint(0.0, 0.0, 31, "north"))
    idx2 = _make_index(np.array([[500000.0, 0.0]]))
    with pytest.raises(ZoneMismatch):
        nearest_way_node(idx2, UtmPoint(500000.0, 0.0, 32, "north"))


def test_build_spatial_index_highway_nodes_only():
    doc = osm_doc(
        "\n".join(node_xml(i, 0.0, 3.0 + i * 1e-5) for i in range(1, 5)),
        way_xml(1, [1, 2], {"highway": "residential"}) + way_xml(2, [3, 4], {"building": "yes"}),
    )
    g = parse_osm(doc)
    idx = build_spatial_index(g)
    assert {e[0] for e in idx.entries} == {1, 2}


# ---------------------------------------------------------------------------
# point_segment_distance
# ---------------------------------------------------------------------------


def _pt(x, y):
    return UtmPoint(float(x), float(y), 31, "north")


def test_point_on_segment_zero():
    assert point_segment_distance(_pt(1.0, 0.0), _pt(0.0, 0.0), _pt(2.0, 0.0)) == 0.0


def test_axis_aligned_distance():
    assert point_segment_distance(_pt(0.0, 1.0), _pt(0.0, 0.0), _pt(2.0, 0.0)) == pytest.approx(1.0)


def test_degenerate_segment():
    with pytest.raises(DegenerateSegment):
        point_segment_distance(_pt(0.0, 1.0), _pt(5.0, 5.0), _pt(5.0, 5.0))


def test_against_dense_sampling_oracle():
    rng = np.random.default_rng(14)
    ts = np.linspace(0.0, 1.0, 10**6)
    for _ in range(50):
        p = rng.uniform(-100, 100, 2)
        a = rng.uniform(-100, 100, 2)
        b = rng.uniform(-100, 100, 2)
        if np.allclose(a, b):
            continue
        got = point_segment_distance_xy(p, a, b)
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        want = np.min(np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1]))
        assert abs(got - want) < 1e-4


def test_symmetry_and_rigid_motion():
    rng = np.random.default_rng(15)
    for _ in range(200):
        p, a, b = rng.uniform(-50, 50, (3, 2))
        if np.allclose(a, b):
            continue
        d1 = point_segment_distance_xy(p, a, b)
        d2 = point_segment_distance_xy(p, b, a)
        assert abs(d1 - d2) <= 1e-9 * max(1.0, d1)
        theta = rng.uniform(0, 2 * math.pi)
        rot = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
        )
        shift = rng.uniform(-1000, 1000, 2)
        d3 = point_segment_distance_xy(rot @ p + shift, rot @ a + shift, rot @ b + shift)
        assert abs(d1 - d3) <= 1e-9 * max(1.0, d1)


# ---------------------------------------------------------------------------
# pose ingestion
# ---------------------------------------------------------------------------


def test_load_poses_gps_heading_conversion(tmp_path):
    # north-based clockwise on disk: 0 = north -> east-based 90
    path = tmp_path / "poses.txt"
    path.write_text("0.0 49.0 8.4 0.0\n1.0 49.0 8.4 90.0\n# comment\n\n2.0 49.0 8.4 270.0\n")
    poses = load_poses(path)
    assert [p.heading_deg for p in poses] == [90.0, 0.0, 180.0]
    assert poses[0].utm.zone == 32


def test_make_pose_normalizes_heading():
    assert make_pose(0.0, 3.0, 370.0).heading_deg == pytest.approx(10.0)
    assert make_pose(0.0, 3.0, -10.0).heading_deg == pytest.approx(350.0)
