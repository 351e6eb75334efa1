"""Synthetic image/mask datasets in the on-disk layout ``load_manifest`` reads.

``rectangles`` draws one axis-aligned rectangle per image, so box prompts
have closed-form overlaps. ``shapes`` draws a rotated textured ellipse (the
target) plus look-alike distractor blobs on a mottled background, so a
segmenter must use image content once the prompt box is loose.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image

KINDS = ("shapes", "rectangles")
SIZES = ((256, 256), (288, 240), (240, 224), (320, 256))


def _smooth_field(rng, size, cells) -> np.ndarray:
    width, height = size
    coarse = rng.random((cells, cells)).astype(np.float32)
    img = Image.fromarray(coarse, mode="F").resize((width, height), Image.BILINEAR)
    return np.asarray(img)


def _ellipse(width, height, cx, cy, ax, ay, angle) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = xx + 0.5 - cx, yy + 0.5 - cy
    c, s = np.cos(angle), np.sin(angle)
    u = (dx * c + dy * s) / ax
    v = (-dx * s + dy * c) / ay
    return u * u + v * v <= 1.0


def render_shapes_sample(rng: np.random.Generator, size: Tuple[int, int], distractors: int = 2):
    width, height = size
    base = np.array([0.62, 0.36, 0.30]) + rng.normal(0, 0.04, 3)
    texture = _smooth_field(rng, size, 9)[..., None] * 0.25
    image = base + texture - 0.12 + rng.normal(0, 0.035, (height, width, 3))

    def blob(min_axis, max_axis):
        ax, ay = rng.uniform(min_axis, max_axis, 2)
        r = max(ax, ay) + 4
        cx = rng.uniform(r, width - r)
        cy = rng.uniform(r, height - r)
        return _ellipse(width, height, cx, cy, ax, ay, rng.uniform(0, np.pi))

    target = blob(16, 42)
    shade = np.array([0.16, 0.10, 0.02]) + rng.normal(0, 0.02, 3)
    for _ in range(distractors):
        other = blob(10, 30) & ~target
        image[other] += shade * rng.uniform(0.8, 1.1) + rng.normal(0, 0.02, (int(other.sum()), 1))
    spots = _smooth_field(rng, size, 24)[..., None] * 0.10
    image = np.where(target[..., None], image + shade + spots, image)
    image = np.clip(image, 0, 1)
    return (image * 255).astype(np.uint8), target


def render_rectangle_sample(rng: np.random.Generator, size: Tuple[int, int]):
    width, height = size
    w = int(rng.integers(8, width // 2))
    h = int(rng.integers(8, height // 2))
    x0 = int(rng.integers(0, width - w + 1))
    y0 = int(rng.integers(0, height - h + 1))
    mask = np.zeros((height, width), dtype=bool)
    mask[y0:y0 + h, x0:x0 + w] = True
    image = np.full((height, width, 3), 40, dtype=np.uint8)
    image[mask] = (200, 120, 90)
    return image, mask


def make_dataset(
    root,
    name: str,
    n: int,
    seed: int = 0,
    kind: str = "shapes",
    sizes: Optional[Sequence[Tuple[int, int]]] = None,
    n_test: int = 0,
) -> Path:
    """Write ``n`` image/mask pairs under ``<root>/<name>`` and return that directory.

    With ``n_test > 0`` a split file ``<root>/<name>/split.json`` puts the
    last ``n_test`` ids on the test side.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    sizes = list(sizes or SIZES)
    base = Path(root) / name
    (base / "images").mkdir(parents=True, exist_ok=True)
    (base / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        size = sizes[int(rng.integers(len(sizes)))]
        if kind == "shapes":
            image, mask = render_shapes_sample(rng, size)
        else:
            image, mask = render_rectangle_sample(rng, size)
        sid = f"{name}_{i:04d}"
        Image.fromarray(image).save(base / "images" / f"{sid}.png")
        Image.fromarray(mask.astype(np.uint8) * 255).save(base / "masks" / f"{sid}.png")
        ids.append(sid)
    if n_test:
        split = {"train": ids[: n - n_test], "test": ids[n - n_test:]}
        (base / "split.json").write_text(json.dumps(split, indent=1))
    return base
