"""Scoring a segmenter on prepared samples under a fixed prompt perturbation."""

from __future__ import annotations

from typing import List, Sequence

from ppsam.data import DatasetManifest, PreparedSample, prepare_sample, restore_to_original
from ppsam.errors import EmptyTestSet
from ppsam.geometry import BoundingBox, extract_bbox, perturb_fixed, rescale_bbox
from ppsam.metrics import dice, mean_of
from ppsam.segmenter.base import predict


def prepare_for_model(model, manifest: DatasetManifest) -> List[PreparedSample]:
    res = model.input_resolution
    return [
        prepare_sample(r, (res, res), normalization=model.normalization, keep_original_mask=True)
        for r in manifest.records
    ]


def gt_prompt(sample: PreparedSample, resolution: int) -> BoundingBox:
    """Tight ground-truth box taken at original resolution and mapped to the model frame."""
    box = extract_bbox(sample.gt_original)
    return rescale_bbox(box, sample.original_size, (resolution, resolution))


def score_sample(model, sample: PreparedSample, p: int) -> float:
    res = model.input_resolution
    prompt = perturb_fixed(gt_prompt(sample, res), p, (res, res))
    probs = predict(model, sample.image, prompt)
    pred = restore_to_original(probs, sample.original_size)
    return dice(sample.gt_original, pred)


def evaluate_prepared(model, samples: Sequence[PreparedSample], p: int) -> float:
    if not samples:
        raise EmptyTestSet("nothing to evaluate")
    return mean_of(score_sample(model, s, p) for s in samples)


def evaluate_at_level(model, test_set: DatasetManifest, p: int) -> float:
    """Unweighted per-sample mean DICE at fixed perturbation ``p`` (model-resolution pixels).

    Scoring happens at each image's original resolution.
    """
    if len(test_set) == 0:
        raise EmptyTestSet(f"test set {test_set.name!r} is empty")
    return evaluate_prepared(model, prepare_for_model(model, test_set), p)
