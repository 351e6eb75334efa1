from ppsam.segmenter.base import (
    BACKENDS,
    GROUP_IDS,
    ParameterGroup,
    PromptableSegmenter,
    SegmenterSpec,
    parameter_groups,
    predict,
)
from ppsam.segmenter.oracle import OracleSegmenter
from ppsam.segmenter.surrogate import SurrogateSegmenter, build_surrogate

__all__ = [
    "BACKENDS",
    "GROUP_IDS",
    "OracleSegmenter",
    "ParameterGroup",
    "PromptableSegmenter",
    "SegmenterSpec",
    "SurrogateSegmenter",
    "build_segmenter",
    "build_surrogate",
    "load_checkpoint",
    "parameter_groups",
    "predict",
]


def build_segmenter(spec: SegmenterSpec, seed: int = 0):
    """Fresh model for any backend (pre-trained weights for the foundation backend)."""
    if spec.backend == "oracle":
        return OracleSegmenter(spec)
    if spec.backend == "surrogate":
        return build_surrogate(spec, seed)
    from ppsam.segmenter.foundation import build_foundation

    return build_foundation(spec)


def load_checkpoint(path):
    """Rebuild a trained model from one of our checkpoint archives."""
    from ppsam.finetune import Checkpoint

    ckpt = Checkpoint.load(path)
    spec = SegmenterSpec(**ckpt.segmenter_spec)
    model = build_segmenter(spec)
    model.load_state_dict(ckpt.weights)
    return model, ckpt
