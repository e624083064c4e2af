"""roadfusion: OSM-derived driving-scene attributes and fused road masks.

Submodules:
  osm        OSM XML parsing into a road graph
  geodesy    WGS84->UTM projection, poses, nearest-node index
  attributes per-pose scenario attribute records and feature export
  camera     camera model and KITTI calibration parsing
  renderer   perspective road-mask rendering + multi-candidate confidence
  refine     super-pixel segmentation and mask relabeling
  vision     graph-cut road extraction and lane-mark masks
  lidar      ground segmentation and Lidar road masks
  fusion     weighted mask fusion and pixel-wise evaluation
  pipeline   batch driver over KITTI-style directories
"""

from .attributes import (
    AttributeConfig,
    DirectAttributes,
    IndirectAttributes,
    IntersectionType,
    RoadType,
    SceneAttributes,
    bearing_angle,
    classify_intersection,
    distance_to_intersection,
    export_features,
    parse_direct,
    road_curvature,
    scene_attributes,
)
from .camera import CameraModel, load_calibration, synthetic_camera
from .fusion import (
    EvalResult,
    FusionWeights,
    PrSweep,
    decode_gt,
    evaluate,
    fuse,
    pr_sweep,
    threshold,
)
from .geodesy import (
    SpatialIndex,
    UtmPoint,
    VehiclePose,
    build_spatial_index,
    load_poses,
    make_pose,
    nearest_way_node,
    point_segment_distance,
    to_utm,
)
from .lidar import GroundSegConfig, fill_mask, load_velodyne, project_points, segment_ground
from .mask import RoadMask, load_mask_png, save_mask_png
from .osm import OsmGraph, OsmNode, OsmWay, highway_ways, parse_osm
from .refine import SuperpixelMap, relabel, superpixels
from .renderer import (
    PoseCandidateSpec,
    RenderConfig,
    RoadPolygon,
    build_road_polygons,
    candidates_mask,
    draw_pose_candidates,
    mean_of_masks,
    render_mask,
)
from .vision import (
    GrabcutConfig,
    GrabcutResult,
    LaneMarkConfig,
    LaneMarkResult,
    grabcut_road,
    grabcut_segment,
    lane_mark_mask,
)

__version__ = "0.1.0"
