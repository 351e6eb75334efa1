"""Bounding-box prompts: extraction from masks, perturbation, rescaling.

Boxes use integer pixel coordinates with inclusive minimum and exclusive
maximum, so ``width = x_max - x_min``. Image sizes are ``(width, height)``
tuples; masks are ``(height, width)`` numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np

from ppsam.errors import DegenerateBox, EmptyMask

Size = Tuple[int, int]  # (width, height)


@dataclass(frozen=True, order=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise DegenerateBox(f"invalid box {self.as_list()}")

    def __iter__(self) -> Iterator[int]:
        return iter((self.x_min, self.y_min, self.x_max, self.y_max))

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list:
        """JSON form ``[x_min, y_min, x_max, y_max]``."""
        return [int(self.x_min), int(self.y_min), int(self.x_max), int(self.y_max)]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "BoundingBox":
        x_min, y_min, x_max, y_max = (int(v) for v in values)
        return cls(x_min, y_min, x_max, y_max)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def fits(self, size: Size) -> bool:
        width, height = size
        return self.x_max <= width and self.y_max <= height

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        return max(w, 0) * max(h, 0)

    def to_mask(self, size: Size) -> np.ndarray:
        width, height = size
        mask = np.zeros((height, width), dtype=bool)
        mask[self.y_min:self.y_max, self.x_min:self.x_max] = True
        return mask


@dataclass(frozen=True)
class PerturbationPolicy:
    """How prompt boxes are enlarged.

    ``mode`` is ``"none"``, ``"fixed"`` (every side moved out by exactly
    ``magnitude`` pixels) or ``"variable"`` (each side moved out by an
    independent uniform integer draw in ``[0, magnitude]``).
    """

    mode: str = "none"
    magnitude: int = 0
    rng_seed: int = 0

    MODES = ("none", "fixed", "variable")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.magnitude < 0:
            raise ValueError("perturbation magnitude must be >= 0")

    def apply(self, box: BoundingBox, image: Size, rng: np.random.Generator) -> BoundingBox:
        if self.mode == "fixed":
            return perturb_fixed(box, self.magnitude, image)
        if self.mode == "variable":
            return perturb_variable(box, self.magnitude, rng, image)
        return box

    @property
    def label(self) -> str:
        if self.mode == "variable":
            return f"variable(0-{self.magnitude})"
        if self.mode == "fixed":
            return f"fixed({self.magnitude})"
        return "none"


def extract_bbox(mask: np.ndarray) -> BoundingBox:
    """Tightest box around every foreground pixel of a 2-D mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError(f"expected a non-empty 2-D mask, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixel")
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def clip_bbox(x_min: int, y_min: int, x_max: int, y_max: int, image: Size) -> BoundingBox:
    width, height = image
    return BoundingBox(
        max(int(x_min), 0), max(int(y_min), 0), min(int(x_max), width), min(int(y_max), height)
    )


def perturb_fixed(box: BoundingBox, p: int, image: Size) -> BoundingBox:
    """Move all four sides outward by ``p`` pixels, then clip to the image."""
    if p < 0:
        raise ValueError("p must be >= 0")
    return clip_bbox(box.x_min - p, box.y_min - p, box.x_max + p, box.y_max + p, image)


def perturb_variable(
    box: BoundingBox, n: int, rng: np.random.Generator, image: Size
) -> BoundingBox:
    """Move each side outward by its own uniform draw from ``0..n`` and clip.

    Draw order is left, top, right, bottom.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    left, top, right, bottom = (int(v) for v in rng.integers(0, n, size=4, endpoint=True))
    return clip_bbox(box.x_min - left, box.y_min - top, box.x_max + right, box.y_max + bottom, image)


def rescale_bbox(box: BoundingBox, src: Size, dst: Size) -> BoundingBox:
    """Map a box between image resolutions.

    Minimum coordinates are floored and maximum coordinates ceiled, so the
    rescaled box always covers the original region. Integer arithmetic keeps
    the result exact.
    """
    src_w, src_h = src
    dst_w, dst_h = dst
    if min(src_w, src_h, dst_w, dst_h) <= 0:
        raise ValueError("image dimensions must be positive")
    x_min = box.x_min * dst_w // src_w
    y_min = box.y_min * dst_h // src_h
    x_max = -(-box.x_max * dst_w // src_w)
    y_max = -(-box.y_max * dst_h // src_h)
    x_max, y_max = min(x_max, dst_w), min(y_max, dst_h)
    if x_max <= x_min or y_max <= y_min:
        raise DegenerateBox(f"box {box.as_list()} collapses when rescaled {src} -> {dst}")
    return BoundingBox(x_min, y_min, x_max, y_max)
