"""Perturbed-prompt fine-tuning: freeze policies, loss, training loop, checkpoint selection."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ppsam.data import FULL, DatasetManifest, FewShotSpec
from ppsam.errors import (
    AllFrozen,
    ConfigError,
    EmptyMask,
    EmptyTrainSet,
    ShapeMismatch,
    TrainingDiverged,
    UnsupportedBackend,
)
from ppsam.evaluate import evaluate_prepared, gt_prompt, prepare_for_model
from ppsam.geometry import PerturbationPolicy
from ppsam.metrics import mean_of, soft_dice_and_iou
from ppsam.segmenter.base import PromptableSegmenter

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreezePolicy:
    image_encoder_trainable: bool = True
    prompt_encoder_trainable: bool = True
    mask_decoder_trainable: bool = False

    def __post_init__(self):
        if not any(self.flags.values()):
            raise AllFrozen("at least one of image_encoder, prompt_encoder, mask_decoder must be trainable")

    @property
    def flags(self) -> Dict[str, bool]:
        return {
            "image_encoder": self.image_encoder_trainable,
            "prompt_encoder": self.prompt_encoder_trainable,
            "mask_decoder": self.mask_decoder_trainable,
        }

    @property
    def label(self) -> str:
        frozen = [g for g, on in self.flags.items() if not on]
        return "frozen: " + "+".join(frozen) if frozen else "all trainable"


# The four transfer-learning settings compared on Kvasir.
FREEZE_ABLATION = (
    FreezePolicy(True, True, True),
    FreezePolicy(True, True, False),
    FreezePolicy(False, True, True),
    FreezePolicy(False, True, False),
)


@dataclass(frozen=True)
class RunConfig:
    fewshot: FewShotSpec = FewShotSpec()
    freeze: FreezePolicy = FreezePolicy()
    train_perturbation: PerturbationPolicy = PerturbationPolicy("variable", 50)
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 1
    input_resolution: int = 1024
    loss_weights: Tuple[float, float] = (1.0, 1.0)
    selection_perturbation: int = 30
    run_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate: must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay: must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs: must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        if self.input_resolution < 1:
            raise ConfigError("input_resolution: must be >= 1")
        if self.selection_perturbation < 0:
            raise ConfigError("selection_perturbation: must be >= 0")
        if any(w < 0 for w in self.loss_weights):
            raise ConfigError("w_ce/w_iou: must be >= 0")

    def to_flat(self) -> dict:
        return {
            "k": self.fewshot.k,
            "fewshot_seed": self.fewshot.seed,
            "image_encoder_trainable": self.freeze.image_encoder_trainable,
            "prompt_encoder_trainable": self.freeze.prompt_encoder_trainable,
            "mask_decoder_trainable": self.freeze.mask_decoder_trainable,
            "train_perturbation": self.train_perturbation.mode,
            "train_perturbation_px": self.train_perturbation.magnitude,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "input_resolution": self.input_resolution,
            "w_ce": self.loss_weights[0],
            "w_iou": self.loss_weights[1],
            "selection_perturbation": self.selection_perturbation,
            "run_seed": self.run_seed,
        }

    @classmethod
    def from_flat(cls, doc: dict) -> "RunConfig":
        """Build from a flat key/value document; unknown keys and bad values raise ConfigError."""
        defaults = cls().to_flat()
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown run config keys: {', '.join(unknown)}")
        merged = {**defaults, **doc}
        types = {
            "k": None,
            "train_perturbation": str,
            "learning_rate": float,
            "weight_decay": float,
            "w_ce": float,
            "w_iou": float,
        }
        for key, value in merged.items():
            expected = types.get(key, type(defaults[key]))
            if key == "k":
                if not (value == FULL or (isinstance(value, int) and not isinstance(value, bool))):
                    raise ConfigError(f"k: expected an integer or {FULL!r}, got {value!r}")
            elif expected is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key}: expected a number, got {value!r}")
            elif expected is bool:
                if not isinstance(value, bool):
                    raise ConfigError(f"{key}: expected true/false, got {value!r}")
            elif expected is int:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{key}: expected an integer, got {value!r}")
            elif not isinstance(value, expected):
                raise ConfigError(f"{key}: expected {expected.__name__}, got {value!r}")
        try:
            fewshot = FewShotSpec(merged["k"], merged["fewshot_seed"])
        except ValueError as exc:
            raise ConfigError(f"k: {exc}") from exc
        try:
            perturbation = PerturbationPolicy(merged["train_perturbation"], merged["train_perturbation_px"])
        except ValueError as exc:
            raise ConfigError(f"train_perturbation: {exc}") from exc
        freeze = FreezePolicy(
            merged["image_encoder_trainable"],
            merged["prompt_encoder_trainable"],
            merged["mask_decoder_trainable"],
        )
        return cls(
            fewshot=fewshot,
            freeze=freeze,
            train_perturbation=perturbation,
            learning_rate=float(merged["learning_rate"]),
            weight_decay=float(merged["weight_decay"]),
            epochs=merged["epochs"],
            batch_size=merged["batch_size"],
            input_resolution=merged["input_resolution"],
            loss_weights=(float(merged["w_ce"]), float(merged["w_iou"])),
            selection_perturbation=merged["selection_perturbation"],
            run_seed=merged["run_seed"],
        )

    def fingerprint(self) -> str:
        return fingerprint(self.to_flat())


def fingerprint(doc) -> str:
    """SHA-256 of a canonical JSON rendering; insensitive to key order."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def apply_freeze_policy(model, policy: FreezePolicy):
    if not isinstance(model, PromptableSegmenter):
        raise UnsupportedBackend(f"backend {getattr(model, 'backend', '?')!r} cannot be frozen or trained")
    for gid, module in model.groups().items():
        module.requires_grad_(policy.flags[gid])
    return model


def training_loss(
    logits: torch.Tensor, gt: torch.Tensor, weights: Tuple[float, float] = (1.0, 1.0)
) -> torch.Tensor:
    """``w_ce * BCE(logits, gt) + w_iou * (1 - soft IoU)``, averaged over the batch.

    Single-channel BCE-with-logits is the binary form of two-class cross-entropy.
    """
    gt = torch.as_tensor(gt).to(logits.dtype)
    if logits.shape != gt.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs gt {tuple(gt.shape)}")
    w_ce, w_iou = weights
    bce = F.binary_cross_entropy_with_logits(logits, gt)
    probs = torch.sigmoid(logits)
    if logits.dim() == 3:
        ious = [soft_dice_and_iou(p, y)[1] for p, y in zip(probs, gt)]
        soft_iou = torch.stack(ious).mean()
    else:
        soft_iou = soft_dice_and_iou(probs, gt)[1]
    return w_ce * bce + w_iou * (1 - soft_iou)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_dice: float
    is_best: bool = False


@dataclass
class Checkpoint:
    weights: Dict[str, torch.Tensor]
    epoch: int
    val_dice: float
    segmenter_spec: dict
    freeze_policy: dict
    run_config: dict
    fingerprint: str

    def save(self, path) -> None:
        torch.save(asdict(self), path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls(**torch.load(path, map_location="cpu", weights_only=False))


def write_training_log(records: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "val_dice", "is_best"])
        for r in records:
            writer.writerow([r.epoch, repr(r.mean_loss), f"{r.val_dice:.6f}", int(r.is_best)])


def step_rng(run_seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([run_seed, step])


def train(
    model,
    train_set: DatasetManifest,
    config: RunConfig,
    validation_set: DatasetManifest,
    prompt_hook=None,
) -> Tuple[Checkpoint, List[EpochRecord]]:
    """Fine-tune ``model`` in place and return the best checkpoint plus the epoch log.

    Every step draws a fresh perturbed prompt from ``config.train_perturbation``
    using an RNG seeded by ``(run_seed, step)``. After each epoch the model is
    scored on ``validation_set`` at ``config.selection_perturbation`` and the
    best-scoring weights are kept. ``prompt_hook(step, sample_id, box)`` sees
    every training prompt.
    """
    if not isinstance(model, PromptableSegmenter):
        raise UnsupportedBackend(f"backend {getattr(model, 'backend', '?')!r} is not trainable")
    if model.input_resolution != config.input_resolution:
        raise ConfigError(
            f"input_resolution: run config says {config.input_resolution}, model uses {model.input_resolution}"
        )
    if len(train_set) == 0:
        raise EmptyTrainSet("training set is empty")
    apply_freeze_policy(model, config.freeze)
    res = config.input_resolution

    samples, prompts = [], []
    for sample in prepare_for_model(model, train_set):
        try:
            prompts.append(gt_prompt(sample, res))
        except EmptyMask:
            log.warning("skipping %s: empty ground-truth mask", sample.sample_id)
            continue
        samples.append(sample)
    if not samples:
        raise EmptyTrainSet("every training sample has an empty mask")
    val_samples = prepare_for_model(model, validation_set)

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    policy = config.train_perturbation
    spec = getattr(model, "spec", None)
    records: List[EpochRecord] = []
    best: Optional[Checkpoint] = None
    step = 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = np.random.default_rng([config.run_seed, epoch, 0x5EED]).permutation(len(samples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            rng = step_rng(config.run_seed, step)
            boxes = [policy.apply(prompts[i], (res, res), rng) for i in batch]
            if prompt_hook is not None:
                for i, box in zip(batch, boxes):
                    prompt_hook(step, samples[i].sample_id, box)
            images = torch.stack([samples[i].image for i in batch])
            gt = torch.from_numpy(np.stack([samples[i].mask for i in batch]))
            loss = training_loss(model.forward_logits(images, boxes), gt, config.loss_weights)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            step += 1
        val = evaluate_prepared(model, val_samples, config.selection_perturbation)
        records.append(EpochRecord(epoch, mean_of(losses), val))
        log.info("epoch %d loss %.4f val_dice %.2f", epoch, records[-1].mean_loss, val)
        if best is None or val > best.val_dice:
            best = Checkpoint(
                weights={k: v.detach().clone() for k, v in model.state_dict().items()},
                epoch=epoch,
                val_dice=val,
                segmenter_spec=spec.to_json() if spec is not None else {},
                freeze_policy=asdict(config.freeze),
                run_config=config.to_flat(),
                fingerprint=config.fingerprint(),
            )
    records[best.epoch - 1].is_best = True
    return best, records
