"""Batch driver: per-frame mask generation, attribute export, and evaluation.

Directory layout follows the KITTI road package (image_2/, calib/, velodyne/,
gt_image_2/); frames are the sorted image stems and map 1:1 onto pose-file
lines. Every product is deterministic given the config and seed.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np
from PIL import Image

from . import fusion
from .attributes import (
    AttributeConfig,
    export_features,
    scene_attributes,
    write_attributes_csv,
)
from .camera import load_calibration
from .fusion import EvalResult, FusionWeights, MASK_SOURCES, PrSweep
from .geodesy import VehiclePose, build_spatial_index, load_poses
from .lidar import GroundSegConfig, fill_mask, load_velodyne, project_points, segment_ground
from .mask import RoadMask, load_mask_png, save_mask_png
from .osm import MalformedXml, OsmGraph, parse_osm
from .refine import relabel, superpixels
from .renderer import (
    PoseCandidateSpec,
    RenderConfig,
    build_road_polygons,
    candidates_mask,
    render_mask,
)
from .vision import GrabcutConfig, LaneMarkConfig, grabcut_road, lane_mark_mask

ALL_SOURCES = ("osm_direct",) + MASK_SOURCES
CONFIDENCE_SOURCES = ("osm_candidates", "combined")


class ConfigError(ValueError):
    pass


@dataclass
class PipelinePaths:
    osm: str = ""
    poses: str = ""
    images: str = ""
    calib: str = ""
    velodyne: str = ""
    gt: str = ""
    output: str = "out"
    dynamics: str | None = None


@dataclass
class CandidateParams:
    n: int = 100
    dx: float = 1.0
    dy: float = 1.0
    dtheta: float = 10.0
    distribution: str = "uniform"


@dataclass
class SuperpixelParams:
    k: int = 800
    compactness: float = 10.0


@dataclass
class PipelineConfig:
    paths: PipelinePaths = field(default_factory=PipelinePaths)
    seed: int = 0
    jobs: int = 0  # 0 = available cores
    weights: FusionWeights = field(default_factory=FusionWeights)
    threshold: str | float = "auto"
    candidates: CandidateParams = field(default_factory=CandidateParams)
    render: RenderConfig = field(default_factory=RenderConfig)
    lidar_height: float = 1.73
    superpixel: SuperpixelParams = field(default_factory=SuperpixelParams)
    grabcut: GrabcutConfig = field(default_factory=GrabcutConfig)
    lanemark: LaneMarkConfig = field(default_factory=LaneMarkConfig)
    ground: GroundSegConfig = field(default_factory=GroundSegConfig)
    attributes: AttributeConfig = field(default_factory=AttributeConfig)
    utm_zone: int | None = None


def _fill_dataclass(obj, data: dict, name: str):
    known = {f.name for f in dc_fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section {name!r}")
        setattr(obj, key, value)
    post_init = getattr(obj, "__post_init__", None)
    if post_init is not None:
        try:
            post_init()
        except ValueError as exc:
            raise ConfigError(f"invalid value in section {name!r}: {exc}") from exc
    return obj


def load_config(path: str | None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from a JSON file plus CLI overrides.

    Precedence: overrides > file > defaults.
    """
    cfg = PipelineConfig()
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    sections = {
        "paths": cfg.paths,
        "candidates": cfg.candidates,
        "render": cfg.render,
        "superpixel": cfg.superpixel,
        "grabcut": cfg.grabcut,
        "lanemark": cfg.lanemark,
        "ground": cfg.ground,
        "attributes": cfg.attributes,
    }
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            _fill_dataclass(sections[key], value, key)
        elif key == "weights":
            cfg.weights = FusionWeights.from_sequence(value)
        elif key in ("seed", "jobs", "threshold", "lidar_height", "utm_zone"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "weights":
            cfg.weights = FusionWeights.from_sequence(value)
        elif key in ("osm", "poses", "images", "calib", "velodyne", "gt", "output", "dynamics"):
            setattr(cfg.paths, key, value)
        else:
            setattr(cfg, key, value)
    if isinstance(cfg.threshold, str) and cfg.threshold != "auto":
        try:
            cfg.threshold = float(cfg.threshold)
        except ValueError as exc:
            raise ConfigError("threshold must be a number or 'auto'") from exc
    if cfg.grabcut.bg_rect is not None:
        cfg.grabcut.bg_rect = tuple(cfg.grabcut.bg_rect)
    if cfg.grabcut.fg_rect is not None:
        cfg.grabcut.fg_rect = tuple(cfg.grabcut.fg_rect)
    return cfg


def frame_category(frame: str) -> str:
    if frame.startswith("umm_"):
        return "UMM"
    if frame.startswith("um_"):
        return "UM"
    if frame.startswith("uu_"):
        return "UU"
    return "OTHER"


def list_frames(cfg: PipelineConfig) -> list[str]:
    if not os.path.isdir(cfg.paths.images):
        raise ConfigError(f"image directory not found: {cfg.paths.images}")
    return sorted(
        os.path.splitext(f)[0]
        for f in os.listdir(cfg.paths.images)
        if f.lower().endswith(".png")
    )


def frame_poses(cfg: PipelineConfig, frames: list[str]) -> dict[str, VehiclePose]:
    """Pose-file lines map onto the sorted frame list, in order."""
    if not cfg.paths.poses:
        raise ConfigError("pose file not configured")
    try:
        poses = load_poses(cfg.paths.poses, cfg.utm_zone)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read pose file: {exc}") from exc
    return dict(zip(frames, poses))


def frame_seed(base_seed: int, frame: str) -> int:
    return (int(base_seed) * 1000003 + zlib.crc32(frame.encode())) % 2**63


def _load_graph_index(cfg: PipelineConfig):
    if not cfg.paths.osm:
        raise ConfigError("OSM extract not configured")
    try:
        with open(cfg.paths.osm, "rb") as fh:
            graph = parse_osm(fh.read())
    except (OSError, MalformedXml) as exc:
        raise ConfigError(f"cannot read OSM extract: {exc}") from exc
    index = build_spatial_index(graph, cfg.utm_zone)
    return graph, index


# ---------------------------------------------------------------------------
# attributes subcommand
# ---------------------------------------------------------------------------


def run_attributes(cfg: PipelineConfig) -> tuple[str, str]:
    """Attribute and feature files for every pose; returns the two paths."""
    graph, index = _load_graph_index(cfg)
    try:
        poses = load_poses(cfg.paths.poses, cfg.utm_zone) if cfg.paths.poses else []
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read pose file: {exc}") from exc
    cache: dict = {}
    records = [scene_attributes(graph, index, p, cfg.attributes, cache) for p in poses]

    dynamics = None
    if cfg.paths.dynamics:
        dynamics = []
        with open(cfg.paths.dynamics) as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    dynamics.append([float(v) for v in line.split()])

    os.makedirs(cfg.paths.output, exist_ok=True)
    attr_path = os.path.join(cfg.paths.output, "attributes.csv")
    feat_path = os.path.join(cfg.paths.output, "features.csv")
    write_attributes_csv(records, attr_path)
    export_features(records, dynamics, feat_path)
    return attr_path, feat_path


# ---------------------------------------------------------------------------
# masks subcommand
# ---------------------------------------------------------------------------


def run_masks(
    cfg: PipelineConfig,
    frame: str,
    graph: OsmGraph | None = None,
    index=None,
    pose: VehiclePose | None = None,
) -> dict[str, RoadMask]:
    """All masks for one frame, written as PNGs under <output>/masks/.

    A missing Lidar scan degrades to 4-mask fusion with renormalized weights.
    """
    if graph is None or index is None:
        graph, index = _load_graph_index(cfg)
    if pose is None:
        frames = list_frames(cfg)
        pose_map = frame_poses(cfg, frames)
        if frame not in pose_map:
            raise ConfigError(f"no pose for frame {frame!r}")
        pose = pose_map[frame]

    image = np.asarray(Image.open(os.path.join(cfg.paths.images, frame + ".png")).convert("RGB"))
    h, w = image.shape[:2]
    calib_path = os.path.join(cfg.paths.calib, frame + ".txt")
    with open(calib_path) as fh:
        cam = load_calibration(fh.read(), image_w=w, image_h=h, lidar_height=cfg.lidar_height)

    rc = cfg.render
    polys = build_road_polygons(graph, index, pose, rc.radius, rc.lane_width, cfg.attributes)
    direct = render_mask(polys, cam, rc.near, rc.far)

    sp = superpixels(image, cfg.superpixel.k, cfg.superpixel.compactness)
    refined = relabel(sp, direct)

    spec = PoseCandidateSpec(
        n=cfg.candidates.n,
        dx=cfg.candidates.dx,
        dy=cfg.candidates.dy,
        dtheta=cfg.candidates.dtheta,
        distribution=cfg.candidates.distribution,
        seed=frame_seed(cfg.seed, frame),
    )
    cand = candidates_mask(graph, index, pose, cam, spec, rc, cfg.attributes)

    grab = grabcut_road(image, cfg.grabcut)
    lane = lane_mark_mask(image, cfg.lanemark).mask

    lidar_mask = None
    velo_path = os.path.join(cfg.paths.velodyne, frame + ".bin") if cfg.paths.velodyne else ""
    if velo_path and os.path.isfile(velo_path):
        with open(velo_path, "rb") as fh:
            cloud = load_velodyne(fh.read())
        ground = segment_ground(cloud, cfg.ground)
        uv, flags = project_points(cloud, ground, cam)
        lidar_mask = fill_mask(uv[flags], w, h, cfg.ground)

    masks = {
        "osm_direct": direct,
        "osm_refined": refined,
        "osm_candidates": cand,
        "grabcut": grab,
        "lanemark": lane,
        "lidar": lidar_mask,
    }

    weights = cfg.weights.as_array()
    if lidar_mask is None:
        warnings.warn(f"frame {frame}: no Lidar scan, fusing 4 masks")
        stack = [refined, cand, grab, lane]
        wsub = weights[:4] / weights[:4].sum()
        data = sum(wt * m.data.astype(np.float64) for wt, m in zip(wsub, stack))
        combined = RoadMask(np.clip(data, 0.0, 1.0), "confidence")
    else:
        combined = fusion.fuse([refined, cand, grab, lane, lidar_mask], cfg.weights)
    masks["combined"] = combined

    mask_dir = os.path.join(cfg.paths.output, "masks")
    os.makedirs(mask_dir, exist_ok=True)
    for name, m in masks.items():
        if m is not None:
            save_mask_png(m, os.path.join(mask_dir, f"{frame}_{name}.png"))
    return masks


def _worker_init(cfg: PipelineConfig):
    global _WORKER_STATE
    graph, index = _load_graph_index(cfg)
    frames = list_frames(cfg)
    _WORKER_STATE = (cfg, graph, index, frame_poses(cfg, frames))


def _worker_run(frame: str):
    cfg, graph, index, pose_map = _WORKER_STATE
    try:
        if frame not in pose_map:
            raise ConfigError(f"no pose for frame {frame!r}")
        run_masks(cfg, frame, graph, index, pose_map[frame])
        return frame, None
    except Exception as exc:  # per-frame isolation: log, keep going
        return frame, f"{type(exc).__name__}: {exc}"


def run_masks_batch(cfg: PipelineConfig, frames: list[str] | None = None) -> dict[str, str]:
    """Masks for every frame; returns {frame: error} for the failures and
    writes a summary JSON either way."""
    if frames is None:
        frames = list_frames(cfg)
    jobs = cfg.jobs if cfg.jobs and cfg.jobs > 0 else (os.cpu_count() or 1)
    failures: dict[str, str] = {}
    if jobs == 1 or len(frames) <= 1:
        _worker_init(cfg)
        results = [_worker_run(f) for f in frames]
    else:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_worker_init, initargs=(cfg,)
        ) as pool:
            results = list(pool.map(_worker_run, frames))
    for frame, err in results:
        if err is not None:
            failures[frame] = err
    os.makedirs(cfg.paths.output, exist_ok=True)
    summary = {
        "frames": frames,
        "ok": [f for f in frames if f not in failures],
        "failures": failures,
    }
    with open(os.path.join(cfg.paths.output, "masks_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return failures


# ---------------------------------------------------------------------------
# eval subcommand
# ---------------------------------------------------------------------------

_SWEEP_STEPS = 101


def run_eval(cfg: PipelineConfig, frames: list[str] | None = None):
    """Per-category micro-averaged P/R/F1 per mask source plus the combined
    mask; confidence sources are thresholded at max-F1 unless pinned."""
    if frames is None:
        frames = list_frames(cfg)
    mask_dir = os.path.join(cfg.paths.output, "masks")
    ts = np.arange(_SWEEP_STEPS) / (_SWEEP_STEPS - 1.0)

    binary_counts: dict[tuple[str, str], np.ndarray] = {}
    conf_counts: dict[tuple[str, str], np.ndarray] = {}
    per_frame_rows = []
    skipped = []

    for frame in frames:
        gt_path = os.path.join(cfg.paths.gt, frame + ".png") if cfg.paths.gt else ""
        if not gt_path or not os.path.isfile(gt_path):
            skipped.append(frame)
            continue
        gt = fusion.decode_gt(np.asarray(Image.open(gt_path).convert("RGB")))
        cat = frame_category(frame)
        g = gt.data.astype(bool)

        for source in ALL_SOURCES + ("combined",):
            kind = "confidence" if source in CONFIDENCE_SOURCES else "binary"
            path = os.path.join(mask_dir, f"{frame}_{source}.png")
            if not os.path.isfile(path):
                continue
            m = load_mask_png(path, kind)
            if kind == "binary":
                res = fusion.evaluate(m, gt, cat)
                key = (source, cat)
                binary_counts.setdefault(key, np.zeros(3, dtype=np.int64))
                binary_counts[key] += np.array([res.tp, res.fp, res.fn])
                per_frame_rows.append(
                    (frame, cat, source, res.tp, res.fp, res.fn, res.precision, res.recall, res.f1)
                )
            else:
                key = (source, cat)
                conf_counts.setdefault(key, np.zeros((_SWEEP_STEPS, 3), dtype=np.int64))
                for i, t in enumerate(ts):
                    p = m.data > t
                    conf_counts[key][i] += np.array(
                        [
                            np.count_nonzero(p & g),
                            np.count_nonzero(p & ~g),
                            np.count_nonzero(~p & g),
                        ]
                    )

    results: dict[str, dict[str, EvalResult]] = {}
    categories = sorted({cat for _, cat in list(binary_counts) + list(conf_counts)})
    chosen_thresholds: dict[tuple[str, str], float] = {}
    for (source, cat), counts in sorted(binary_counts.items()):
        results.setdefault(source, {})[cat] = EvalResult.from_counts(
            *map(int, counts), category=cat
        )
    sweeps: dict[tuple[str, str], PrSweep] = {}
    for (source, cat), counts in sorted(conf_counts.items()):
        sweep = fusion.sweep_from_counts(counts[:, 0], counts[:, 1], counts[:, 2], ts)
        sweeps[(source, cat)] = sweep
        if cfg.threshold == "auto":
            t_star = sweep.best[0]
        else:
            t_star = float(cfg.threshold)
        chosen_thresholds[(source, cat)] = t_star
        i = int(np.argmin(np.abs(ts - t_star)))
        results.setdefault(source, {})[cat] = EvalResult.from_counts(
            *map(int, counts[i]), category=cat
        )

    order = [s for s in ALL_SOURCES + ("combined",) if s in results]
    results = {s: results[s] for s in order}
    table = fusion.format_results_table(results, categories)

    os.makedirs(cfg.paths.output, exist_ok=True)
    with open(os.path.join(cfg.paths.output, "eval_report.txt"), "w") as fh:
        fh.write(table + "\n")
        if skipped:
            fh.write(f"\nskipped (no ground truth): {len(skipped)} frames\n")
        for (source, cat), t_star in sorted(chosen_thresholds.items()):
            fh.write(f"threshold {source}/{cat}: {t_star:.2f}\n")
    with open(os.path.join(cfg.paths.output, "eval_per_frame.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "category", "source", "tp", "fp", "fn", "precision", "recall", "f1"])
        for row in per_frame_rows:
            writer.writerow(
                list(row[:6]) + [f"{row[6]:.6f}", f"{row[7]:.6f}", f"{row[8]:.6f}"]
            )
    for (source, cat), sweep in sorted(sweeps.items()):
        path = os.path.join(cfg.paths.output, f"pr_{source}_{cat}.txt")
        with open(path, "w") as fh:
            for rec, prec in zip(sweep.recalls, sweep.precisions):
                fh.write(f"{rec:.6f} {prec:.6f}\n")
    return results, skipped


def run_pipeline(cfg: PipelineConfig) -> dict[str, str]:
    """attributes + masks + eval in sequence; returns mask-stage failures."""
    run_attributes(cfg)
    failures = run_masks_batch(cfg)
    run_eval(cfg)
    return failures
