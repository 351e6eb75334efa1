"""Compact CPU-trainable stand-in with the same three-component layout as SAM."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ppsam.geometry import BoundingBox
from ppsam.segmenter.base import PromptableSegmenter, SegmenterSpec

WIDTHS = {"S": 16, "B": 32, "L": 64}
PATCH = 4


def rasterize_boxes(boxes: Sequence[BoundingBox], resolution: int) -> torch.Tensor:
    masks = torch.zeros((len(boxes), 1, resolution, resolution))
    for i, box in enumerate(boxes):
        masks[i, 0, box.y_min:box.y_max, box.x_min:box.x_max] = 1.0
    return masks


class ImageEncoder(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.patch = nn.Conv2d(3, width, PATCH, stride=PATCH)
        self.body = nn.Sequential(
            nn.GELU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(width, width, 3, padding=2, dilation=2),
            nn.GELU(),
        )

    def forward(self, images):
        return self.body(self.patch(images))


class PromptEncoder(nn.Module):
    """Dense path: rasterized box channel; sparse path: normalized corner coordinates."""

    def __init__(self, width: int):
        super().__init__()
        self.dense = nn.Sequential(
            nn.Conv2d(1, width, PATCH, stride=PATCH),
            nn.GELU(),
            nn.Conv2d(width, width, 3, padding=1),
        )
        self.sparse = nn.Linear(4, width)

    def forward(self, boxes: Sequence[BoundingBox], resolution: int):
        dense = self.dense(rasterize_boxes(boxes, resolution))
        coords = torch.tensor([box.as_list() for box in boxes], dtype=torch.float32) / resolution
        return dense + self.sparse(coords)[:, :, None, None]


class MaskDecoder(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(2 * width, width, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(width, width, 3, padding=2, dilation=2),
            nn.GELU(),
            nn.Conv2d(width, 1, 1),
        )

    def forward(self, image_embedding, prompt_embedding, out_size):
        logits = self.body(torch.cat([image_embedding, prompt_embedding], dim=1))
        return F.interpolate(logits, size=out_size, mode="bilinear", align_corners=False)[:, 0]


class SurrogateSegmenter(PromptableSegmenter):
    backend = "surrogate"

    def __init__(self, spec: SegmenterSpec):
        super().__init__(spec)
        if spec.variant not in WIDTHS:
            raise ValueError(f"unknown surrogate variant {spec.variant!r}; expected one of {sorted(WIDTHS)}")
        if spec.input_resolution % PATCH:
            raise ValueError(f"surrogate input_resolution must be a multiple of {PATCH}")
        width = WIDTHS[spec.variant]
        self.image_encoder = ImageEncoder(width)
        self.prompt_encoder = PromptEncoder(width)
        self.mask_decoder = MaskDecoder(width)

    def forward_logits(self, images, boxes):
        res = self.input_resolution
        embedding = self.image_encoder(images)
        prompt = self.prompt_encoder(boxes, res)
        return self.mask_decoder(embedding, prompt, (res, res))


def build_surrogate(spec: SegmenterSpec, seed: int = 0) -> SurrogateSegmenter:
    """Freshly initialized surrogate; ``seed`` fixes the initial weights."""
    if spec.backend != "surrogate":
        raise ValueError(f"build_surrogate needs backend 'surrogate', got {spec.backend!r}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return SurrogateSegmenter(spec)
