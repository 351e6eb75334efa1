"""Common surface shared by every promptable segmenter backend."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import torch
from torch import nn

from ppsam.data import Normalization
from ppsam.errors import InvalidPrompt, UnsupportedBackend
from ppsam.geometry import BoundingBox

BACKENDS = ("foundation", "surrogate", "oracle")
GROUP_IDS = ("image_encoder", "prompt_encoder", "mask_decoder")


@dataclass(frozen=True)
class SegmenterSpec:
    backend: str = "surrogate"
    variant: str = "B"
    input_resolution: int = 256
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.input_resolution < 1:
            raise ValueError("input_resolution must be positive")

    @property
    def size(self):
        return (self.input_resolution, self.input_resolution)

    def to_json(self) -> dict:
        return {
            "backend": self.backend,
            "variant": self.variant,
            "input_resolution": self.input_resolution,
            "checkpoint": self.checkpoint,
        }


@dataclass(frozen=True)
class ParameterGroup:
    group_id: str
    parameter_count: int
    trainable: bool


class PromptableSegmenter(nn.Module):
    """Trainable segmenter made of an image encoder, a prompt encoder and a mask decoder.

    Subclasses implement :meth:`forward_logits` and expose the three
    submodules as attributes named after :data:`GROUP_IDS`.
    """

    backend = "abstract"
    normalization = Normalization()

    def __init__(self, spec: SegmenterSpec):
        super().__init__()
        self.spec = spec

    @property
    def input_resolution(self) -> int:
        return self.spec.input_resolution

    def groups(self) -> Dict[str, nn.Module]:
        return {gid: getattr(self, gid) for gid in GROUP_IDS}

    def forward_logits(self, images: torch.Tensor, boxes: Sequence[BoundingBox]) -> torch.Tensor:
        """Logits of shape ``(B, H, W)`` at model resolution."""
        raise NotImplementedError

    def forward(self, images, boxes):
        return self.forward_logits(images, boxes)


def check_prompt(box: BoundingBox, resolution: int) -> None:
    if not isinstance(box, BoundingBox):
        raise InvalidPrompt(f"prompt must be a BoundingBox, got {type(box).__name__}")
    if box.x_max > resolution or box.y_max > resolution:
        raise InvalidPrompt(f"prompt {box.as_list()} exceeds model resolution {resolution}")


def predict(model, image: torch.Tensor, prompt: BoundingBox) -> torch.Tensor:
    """Per-pixel foreground probabilities ``(H, W)`` for one prepared image."""
    check_prompt(prompt, model.input_resolution)
    if isinstance(model, nn.Module):
        was_training = model.training
        model.eval()
        with torch.no_grad():
            probs = torch.sigmoid(model.forward_logits(image[None], [prompt]))[0]
        model.train(was_training)
        return probs
    return model.predict_probs(image, prompt)


def parameter_groups(model) -> List[ParameterGroup]:
    if not isinstance(model, PromptableSegmenter):
        raise UnsupportedBackend(f"backend {getattr(model, 'backend', type(model).__name__)!r} has no parameters")
    out = []
    for gid, module in model.groups().items():
        params = list(module.parameters())
        count = sum(p.numel() for p in params)
        trainable = bool(params) and all(p.requires_grad for p in params)
        out.append(ParameterGroup(gid, count, trainable))
    return out
