"""Road-mask grid type and PNG persistence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


class ShapeMismatch(ValueError):
    pass


@dataclass
class RoadMask:
    """Image-sized grid of road membership.

    kind "binary" holds uint8 {0, 1}; kind "confidence" holds float64 in [0, 1].
    """

    data: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        if self.kind not in ("binary", "confidence"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.data.ndim != 2:
            raise ValueError("mask grid must be 2-D")
        if self.kind == "binary":
            self.data = self.data.astype(np.uint8, copy=False)
            bad = (self.data != 0) & (self.data != 1)
            if bad.any():
                raise ValueError("binary mask holds values outside {0, 1}")
        else:
            self.data = self.data.astype(np.float64, copy=False)
            if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
                raise ValueError("confidence mask holds values outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def same_shape(self, other: "RoadMask") -> None:
        if self.shape != other.shape:
            raise ShapeMismatch(f"{self.shape} vs {other.shape}")


def empty_binary(h: int, w: int) -> RoadMask:
    return RoadMask(np.zeros((h, w), dtype=np.uint8), "binary")


def save_mask_png(mask: RoadMask, path) -> None:
    """Binary masks persist as {0, 255}; confidence as round(255 * value)."""
    if mask.kind == "binary":
        arr = (mask.data * 255).astype(np.uint8)
    else:
        arr = np.rint(mask.data * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_mask_png(path, kind: str = "binary") -> RoadMask:
    arr = np.asarray(Image.open(path).convert("L"))
    if kind == "binary":
        return RoadMask((arr >= 128).astype(np.uint8), "binary")
    return RoadMask(arr.astype(np.float64) / 255.0, "confidence")
