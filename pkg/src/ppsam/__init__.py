"""Fine-tuning promptable segmenters with perturbed box prompts, and sweeping their robustness."""

from ppsam.geometry import BoundingBox, PerturbationPolicy, extract_bbox, perturb_fixed, perturb_variable, rescale_bbox
from ppsam.metrics import CurvePoint, aggregate_runs, dice, soft_dice_and_iou

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CurvePoint",
    "PerturbationPolicy",
    "aggregate_runs",
    "dice",
    "extract_bbox",
    "perturb_fixed",
    "perturb_variable",
    "rescale_bbox",
    "soft_dice_and_iou",
]
