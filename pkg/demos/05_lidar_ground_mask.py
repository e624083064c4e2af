"""From a Lidar scan to a filled road mask in the image plane.

A synthetic scan of a flat road plus two obstacles is segmented into ground
and non-ground by sector-wise line fitting, the ground points are projected
through the camera, and the sparse hits are dilated/closed into a filled mask.
"""

import os

import numpy as np

from roadfusion import (
    GroundSegConfig,
    fill_mask,
    load_velodyne,
    project_points,
    segment_ground,
    synthetic_camera,
)
from roadfusion.mask import save_mask_png

OUT = os.path.join(os.path.dirname(__file__), "output")


def synthetic_scan() -> bytes:
    rng = np.random.default_rng(5)
    n = 16000
    ground = np.column_stack(
        [
            rng.uniform(1.5, 45.0, n),
            rng.uniform(-18.0, 18.0, n),
            np.full(n, -1.65) + rng.normal(0, 0.015, n),
            rng.uniform(0, 1, n),
        ]
    )
    def box(x0, x1, y0, y1, m):
        return np.column_stack(
            [
                rng.uniform(x0, x1, m),
                rng.uniform(y0, y1, m),
                -1.65 + rng.uniform(0.4, 1.9, m),
                rng.uniform(0, 1, m),
            ]
        )
    cloud = np.vstack([ground, box(9, 11, 2.5, 4.5, 1200), box(14, 16, -5.0, -3.0, 1200)])
    return cloud.astype(np.float32).tobytes()


def main():
    os.makedirs(OUT, exist_ok=True)
    cloud = load_velodyne(synthetic_scan())
    print(f"scan holds {len(cloud)} points")

    cfg = GroundSegConfig()
    ground = segment_ground(cloud, cfg)
    print(f"ground points: {int(ground.sum())} ({100 * ground.mean():.1f}%)")

    cam = synthetic_camera(1242, 375, 721.5, 609.6, 172.9, cam_height=1.6)
    uv, flags = project_points(cloud, ground, cam)
    print(f"{len(uv)} points project into the image, {int(flags.sum())} of them ground")

    mask = fill_mask(uv[flags], cam.image_w, cam.image_h, cfg)
    save_mask_png(mask, os.path.join(OUT, "mask_lidar.png"))
    print(f"filled road mask covers {int(mask.data.sum())} px -> output/mask_lidar.png")


if __name__ == "__main__":
    main()
