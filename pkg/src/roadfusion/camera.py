"""Camera model and KITTI-format calibration parsing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BadCalibration(ValueError):
    pass


@dataclass
class CameraModel:
    """Projection chain image <- P @ R_rect @ T_velo_cam <- Lidar-frame points.

    velo_ground_z is the z of the flat ground plane in the Lidar frame; real
    KITTI mounts the scanner about 1.73 m above the road, synthetic rigs use 0.
    """

    P: np.ndarray
    R_rect: np.ndarray
    T_velo_cam: np.ndarray
    image_w: int
    image_h: int
    velo_ground_z: float = 0.0

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64).reshape(3, 4)
        self.R_rect = np.asarray(self.R_rect, dtype=np.float64).reshape(4, 4)
        self.T_velo_cam = np.asarray(self.T_velo_cam, dtype=np.float64).reshape(4, 4)

    @property
    def full_projection(self) -> np.ndarray:
        """3x4 matrix taking homogeneous Lidar-frame points to image space."""
        return self.P @ self.R_rect @ self.T_velo_cam

    def cam_from_velo(self) -> np.ndarray:
        """4x4 transform from the Lidar frame into the rectified camera frame."""
        return self.R_rect @ self.T_velo_cam


def _parse_floats(line: str) -> np.ndarray:
    return np.array([float(v) for v in line.split()], dtype=np.float64)


def load_calibration(
    text: str,
    image_w: int = 1242,
    image_h: int = 375,
    lidar_height: float = 0.0,
) -> CameraModel:
    """Parse KITTI calibration text: `P2:` (12 floats), `R0_rect:` (9),
    `Tr_velo_to_cam:` (12), row-major. lidar_height > 0 places the ground
    plane that far below the scanner origin."""
    fields: dict[str, np.ndarray] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            fields[key.strip()] = _parse_floats(rest)
        except ValueError:
            continue
    for key, n in (("P2", 12), ("R0_rect", 9), ("Tr_velo_to_cam", 12)):
        if key not in fields:
            raise BadCalibration(f"calibration lacks {key}")
        if fields[key].size != n:
            raise BadCalibration(f"{key} has {fields[key].size} values, expected {n}")

    P = fields["P2"].reshape(3, 4)
    R = np.eye(4)
    R[:3, :3] = fields["R0_rect"].reshape(3, 3)
    T = np.eye(4)
    T[:3, :4] = fields["Tr_velo_to_cam"].reshape(3, 4)
    return CameraModel(
        P=P,
        R_rect=R,
        T_velo_cam=T,
        image_w=image_w,
        image_h=image_h,
        velo_ground_z=-lidar_height,
    )


# Axis permutation from a forward/left/up vehicle frame into the camera's
# right/down/forward convention.
VEHICLE_TO_CAM_AXES = np.array(
    [
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
    ]
)


def synthetic_camera(
    image_w: int,
    image_h: int,
    focal: float,
    cx: float,
    cy: float,
    cam_height: float,
) -> CameraModel:
    """Forward-looking pinhole camera cam_height metres above a z=0 ground."""
    K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
    P = np.hstack([K, np.zeros((3, 1))])
    T = np.eye(4)
    T[:3, :3] = VEHICLE_TO_CAM_AXES
    T[:3, 3] = -VEHICLE_TO_CAM_AXES @ np.array([0.0, 0.0, cam_height])
    return CameraModel(
        P=P, R_rect=np.eye(4), T_velo_cam=T, image_w=image_w, image_h=image_h
    )
