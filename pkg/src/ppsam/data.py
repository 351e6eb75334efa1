"""Dataset manifests, train/test splits, few-shot sampling, sample preparation.

Layout on disk::

    <root>/<name>/images/<id>.{jpg,png}
    <root>/<name>/masks/<id>.{jpg,png}

Split files are JSON ``{"train": [...], "test": [...]}``; manifest caches are
JSON lines with one sample record per line.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from ppsam.errors import (
    CorruptFile,
    EmptyDataset,
    InsufficientData,
    MissingPair,
    OverlappingSplit,
    UnknownId,
)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
FULL = "full"
ZERO_SHOT = 0
SHOT_GRID = (1, 5, 10, 20, 50, 100)
MASK_THRESHOLD = 0.5
ROLES = ("train", "test", "unseen-test")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    image_path: str
    mask_path: str
    original_size: Tuple[int, int]  # (width, height)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "original_size": list(self.original_size),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SampleRecord":
        return cls(
            obj["sample_id"], obj["image_path"], obj["mask_path"], tuple(obj["original_size"])
        )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: Tuple[SampleRecord, ...]
    role: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.sample_id)))
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sample ids in manifest {self.name!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown manifest role {self.role!r}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> List[str]:
        return [r.sample_id for r in self.records]

    def subset(self, ids, name: Optional[str] = None, role: Optional[str] = None) -> "DatasetManifest":
        keep = set(ids)
        return DatasetManifest(
            name or self.name, tuple(r for r in self.records if r.sample_id in keep), role or self.role
        )

    def union(self, other: "DatasetManifest", name: Optional[str] = None) -> "DatasetManifest":
        return DatasetManifest(name or self.name, self.records + other.records, self.role)


@dataclass(frozen=True)
class FewShotSpec:
    """Shot count ``k`` (an int, :data:`FULL`, or :data:`ZERO_SHOT` for no training)."""

    k: Union[int, str] = FULL
    seed: int = 0

    def __post_init__(self):
        if self.k != FULL and self.k not in (ZERO_SHOT,) + SHOT_GRID:
            raise ValueError(f"k must be one of {SHOT_GRID}, 0 (zero-shot) or {FULL!r}; got {self.k!r}")

    @property
    def zero_shot(self) -> bool:
        return self.k == ZERO_SHOT


def _image_size(path: Path) -> Tuple[int, int]:
    try:
        with Image.open(path) as im:
            return im.size
    except (OSError, UnidentifiedImageError) as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc


def _stems(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        return {}
    found = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in IMAGE_SUFFIXES:
            found[path.stem] = path
    return found


def load_manifest(root: Union[str, os.PathLike], name: str, role: str = "train") -> DatasetManifest:
    """Pair ``images/`` and ``masks/`` files of ``<root>/<name>`` by file stem."""
    base = Path(root) / name
    images = _stems(base / "images")
    masks = _stems(base / "masks")
    missing_mask = set(images) - set(masks)
    missing_image = set(masks) - set(images)
    if missing_mask or missing_image:
        raise MissingPair(
            [images[s].name for s in missing_mask], [masks[s].name for s in missing_image]
        )
    if not images:
        raise EmptyDataset(f"no image/mask pairs under {base}")
    records = [
        SampleRecord(stem, str(images[stem]), str(masks[stem]), _image_size(images[stem]))
        for stem in sorted(images)
    ]
    return DatasetManifest(name, tuple(records), role)


def write_manifest(manifest: DatasetManifest, path: Union[str, os.PathLike]) -> None:
    with open(path, "w") as fh:
        for record in manifest.records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def read_manifest(path: Union[str, os.PathLike], name: Optional[str] = None, role: str = "train") -> DatasetManifest:
    with open(path) as fh:
        records = [SampleRecord.from_json(json.loads(line)) for line in fh if line.strip()]
    return DatasetManifest(name or Path(path).stem, tuple(records), role)


def split_train_test(
    manifest: DatasetManifest, split_file: Union[str, os.PathLike]
) -> Tuple[DatasetManifest, DatasetManifest]:
    with open(split_file) as fh:
        split = json.load(fh)
    train_ids, test_ids = set(split.get("train", [])), set(split.get("test", []))
    known = set(manifest.ids)
    unknown = (train_ids | test_ids) - known
    if unknown:
        raise UnknownId(f"split file ids not in {manifest.name!r}: {sorted(unknown)[:10]}")
    overlap = train_ids & test_ids
    if overlap:
        raise OverlappingSplit(f"ids on both sides of the split: {sorted(overlap)[:10]}")
    uncovered = known - train_ids - test_ids
    if uncovered:
        raise UnknownId(f"manifest ids missing from split file: {sorted(uncovered)[:10]}")
    for side, ids in (("train", train_ids), ("test", test_ids)):
        if not ids:
            raise EmptyDataset(f"split side {side!r} of {manifest.name!r} is empty")
    train = manifest.subset(train_ids, name=f"{manifest.name}/train", role="train")
    test = manifest.subset(test_ids, name=f"{manifest.name}/test", role="test")
    return train, test


def sample_fewshot(train: DatasetManifest, spec: FewShotSpec) -> DatasetManifest:
    """Uniform sample of ``k`` records without replacement, fixed by ``spec.seed``."""
    if spec.k == FULL:
        return train
    k = int(spec.k)
    if k > len(train) or k < 1:
        raise InsufficientData(f"cannot draw {k} samples from {len(train)} records")
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(len(train), size=k, replace=False)
    return train.subset([train.records[i].sample_id for i in chosen], name=f"{train.name}@{k}shot")


def carve_validation(
    train: DatasetManifest, fraction: float = 0.1, seed: int = 0
) -> Tuple[DatasetManifest, DatasetManifest]:
    """Deterministically hold out ``fraction`` of a training pool for checkpoint selection."""
    if not 0 < fraction < 1:
        raise ValueError("validation fraction must be in (0, 1)")
    n_val = max(1, int(round(fraction * len(train))))
    if n_val >= len(train):
        raise InsufficientData(f"{len(train)} records leave nothing to train on")
    rng = np.random.default_rng(seed)
    held = {train.records[i].sample_id for i in rng.choice(len(train), size=n_val, replace=False)}
    pool = train.subset([i for i in train.ids if i not in held], name=train.name)
    val = train.subset(held, name=f"{train.name}/val")
    return pool, val


@dataclass(frozen=True)
class Normalization:
    mean: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: Tuple[float, float, float] = (0.5, 0.5, 0.5)


def _load_array(path: str, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode))
    except (OSError, UnidentifiedImageError) as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc


def binarize(mask: np.ndarray, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """Foreground where intensity reaches ``threshold`` of the mask maximum."""
    mask = np.asarray(mask, dtype=np.float64)
    peak = mask.max() if mask.size else 0.0
    if peak <= 0:
        return np.zeros(mask.shape, dtype=bool)
    return mask >= threshold * peak


def load_gt_mask(record: SampleRecord, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """Ground-truth mask at the original image resolution."""
    mask = binarize(_load_array(record.mask_path, "L"), threshold)
    if (mask.shape[1], mask.shape[0]) != tuple(record.original_size):
        raise CorruptFile(
            f"mask {record.mask_path} is {mask.shape[1]}x{mask.shape[0]}, image is {record.original_size}"
        )
    return mask


def resize_image(image: np.ndarray, size: Tuple[int, int]) -> torch.Tensor:
    """Bilinear resize of an ``(H, W, 3)`` uint8 array to a ``(3, h, w)`` float tensor in [0, 1]."""
    width, height = size
    t = torch.from_numpy(np.array(image, copy=True)).permute(2, 0, 1).float().div_(255.0)
    if t.shape[1:] == (height, width):
        return t
    return F.interpolate(t[None], size=(height, width), mode="bilinear", align_corners=False)[0]


def resize_mask_nearest(mask: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    width, height = size
    if mask.shape == (height, width):
        return mask.copy()
    t = torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32))[None, None]
    out = F.interpolate(t, size=(height, width), mode="nearest-exact")[0, 0]
    return out.numpy()


@dataclass
class PreparedSample:
    sample_id: str
    image: torch.Tensor  # (3, h, w), normalized
    mask: np.ndarray  # (h, w) bool at model resolution
    original_size: Tuple[int, int]
    gt_original: Optional[np.ndarray] = field(default=None, repr=False)


def prepare_sample(
    record: SampleRecord,
    target: Tuple[int, int],
    mask_threshold: float = MASK_THRESHOLD,
    normalization: Normalization = Normalization(),
    keep_original_mask: bool = False,
) -> PreparedSample:
    """Load one image/mask pair and bring it to model resolution ``target`` (w, h)."""
    image = _load_array(record.image_path, "RGB")
    raw_mask = _load_array(record.mask_path, "L")
    if raw_mask.shape != image.shape[:2]:
        raise CorruptFile(f"image and mask sizes differ for {record.sample_id!r}")
    pixels = resize_image(image, target)
    mean = torch.tensor(normalization.mean).view(3, 1, 1)
    std = torch.tensor(normalization.std).view(3, 1, 1)
    pixels = (pixels - mean) / std
    peak = float(raw_mask.max())
    if peak > 0:
        # threshold relative to the original peak so resizing cannot shift it
        mask = resize_mask_nearest(raw_mask, target) >= mask_threshold * peak
    else:
        mask = np.zeros((target[1], target[0]), dtype=bool)
    gt_original = binarize(raw_mask, mask_threshold) if keep_original_mask else None
    return PreparedSample(record.sample_id, pixels, mask, (image.shape[1], image.shape[0]), gt_original)


def restore_to_original(
    probs: Union[torch.Tensor, np.ndarray], original_size: Tuple[int, int], threshold: float = 0.5
) -> np.ndarray:
    """Bilinearly resize a model-resolution probability map to ``original_size``.

    Pixels strictly above ``threshold`` are foreground.
    """
    width, height = original_size
    if width <= 0 or height <= 0:
        raise ValueError("original size must be positive")
    t = torch.as_tensor(probs, dtype=torch.float32)
    if t.shape != (height, width):
        t = F.interpolate(t[None, None], size=(height, width), mode="bilinear", align_corners=False)[0, 0]
    return (t > threshold).numpy()
