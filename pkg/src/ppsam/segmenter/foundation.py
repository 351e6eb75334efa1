"""Adapter around a published pre-trained Segment Anything checkpoint.

The upstream ``segment_anything`` package and its weights are inputs, never
vendored. Any object exposing ``image_encoder``, ``prompt_encoder`` and
``mask_decoder`` with the upstream call signatures can be wrapped.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from ppsam.data import Normalization
from ppsam.errors import ConfigError
from ppsam.geometry import BoundingBox
from ppsam.segmenter.base import PromptableSegmenter, SegmenterSpec

VARIANTS = {"B": "vit_b", "L": "vit_l", "H": "vit_h"}

# Upstream pixel statistics, rescaled from 0..255 to 0..1.
SAM_NORMALIZATION = Normalization(
    mean=(123.675 / 255, 116.28 / 255, 103.53 / 255),
    std=(58.395 / 255, 57.12 / 255, 57.375 / 255),
)


class FoundationSegmenter(PromptableSegmenter):
    backend = "foundation"
    normalization = SAM_NORMALIZATION

    def __init__(self, spec: SegmenterSpec, sam):
        super().__init__(spec)
        self.image_encoder = sam.image_encoder
        self.prompt_encoder = sam.prompt_encoder
        self.mask_decoder = sam.mask_decoder

    def forward_logits(self, images: torch.Tensor, boxes: Sequence[BoundingBox]) -> torch.Tensor:
        res = self.input_resolution
        embeddings = self.image_encoder(images)
        out = []
        # the upstream decoder handles one image embedding per call
        for embedding, box in zip(embeddings, boxes):
            coords = torch.tensor([box.as_list()], dtype=torch.float32, device=embedding.device)
            sparse, dense = self.prompt_encoder(points=None, boxes=coords, masks=None)
            low_res, _iou = self.mask_decoder(
                image_embeddings=embedding[None],
                image_pe=self.prompt_encoder.get_dense_pe(),
                sparse_prompt_embeddings=sparse,
                dense_prompt_embeddings=dense,
                multimask_output=False,
            )
            out.append(F.interpolate(low_res, size=(res, res), mode="bilinear", align_corners=False)[0, 0])
        return torch.stack(out)


def build_foundation(spec: SegmenterSpec, load_weights: bool = True) -> FoundationSegmenter:
    """Build the upstream model for ``spec.variant`` and load ``spec.checkpoint``.

    ``load_weights=False`` builds randomly initialized upstream modules, which is
    only useful for structural checks such as parameter counting.
    """
    if spec.variant not in VARIANTS:
        raise ConfigError(f"variant: unknown foundation variant {spec.variant!r}; expected one of {sorted(VARIANTS)}")
    if load_weights and not spec.checkpoint:
        raise ConfigError("checkpoint: the foundation backend needs a pre-trained checkpoint path")
    try:
        from segment_anything import sam_model_registry
    except ImportError as exc:
        raise ConfigError(
            "backend: the foundation backend needs the 'segment_anything' package (pip install ppsam[foundation])"
        ) from exc
    sam = sam_model_registry[VARIANTS[spec.variant]](checkpoint=spec.checkpoint if load_weights else None)
    return FoundationSegmenter(spec, sam)
