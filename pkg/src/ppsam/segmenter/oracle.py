from __future__ import annotations

import torch

from ppsam.data import Normalization
from ppsam.geometry import BoundingBox
from ppsam.segmenter.base import SegmenterSpec


class OracleSegmenter:
    """Returns exactly the prompt box interior; exists to make sweep math checkable."""

    backend = "oracle"
    normalization = Normalization()

    def __init__(self, spec: SegmenterSpec):
        self.spec = spec

    @property
    def input_resolution(self) -> int:
        return self.spec.input_resolution

    def predict_probs(self, image: torch.Tensor, box: BoundingBox) -> torch.Tensor:
        height, width = image.shape[-2:]
        probs = torch.zeros((height, width), dtype=torch.float32)
        probs[box.y_min:box.y_max, box.x_min:box.x_max] = 1.0
        return probs
