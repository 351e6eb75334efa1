"""Experiment documents, dataset resolution and the JSON-lines experiment index.

An experiment document (JSON or TOML) looks like::

    name = "kvasir-1shot"            # optional
    kind = "fewshot-curve"           # optional, sweeps only
    [run]        # flat run-config keys, see RunConfig.to_flat()
    [segmenter]  # backend, variant, checkpoint
    [data]       # dataset, split_file, root, selection, validation_fraction
    [sweep]      # levels, test_sets, runs
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ppsam.data import DatasetManifest, load_manifest, split_train_test
from ppsam.errors import ConfigError, MissingExperiment
from ppsam.finetune import RunConfig, fingerprint
from ppsam.segmenter import SegmenterSpec
from ppsam.sweep import KINDS, SweepSpec

try:  # Python >= 3.11
    import tomllib
except ImportError:  # pragma: no cover
    import tomli as tomllib

TOP_KEYS = {"name", "kind", "run", "segmenter", "data", "sweep"}
SEGMENTER_KEYS = {"backend", "variant", "checkpoint"}
DATA_KEYS = {"dataset", "split_file", "root", "selection", "validation_fraction"}
SWEEP_KEYS = {"levels", "test_sets", "runs"}
SELECTION_MODES = ("validation", "test")


def output_root(override=None) -> Path:
    return Path(override or os.environ.get("PPSAM_OUT", "ppsam_out"))


def data_root(override=None) -> Path:
    root = override or os.environ.get("PPSAM_DATA")
    if not root:
        raise ConfigError("data.root: no dataset root given (set PPSAM_DATA or data.root)")
    return Path(root)


def _check_keys(table: dict, allowed: set, where: str) -> None:
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    segmenter: SegmenterSpec
    dataset: str
    split_file: Optional[str] = None
    root: Optional[str] = None
    selection: str = "validation"
    validation_fraction: float = 0.1
    sweep: SweepSpec = SweepSpec()
    name: Optional[str] = None
    kind: Optional[str] = None

    def to_doc(self) -> dict:
        doc = {
            "run": self.run.to_flat(),
            "segmenter": {"backend": self.segmenter.backend, "variant": self.segmenter.variant},
            "data": {
                "dataset": self.dataset,
                "selection": self.selection,
                "validation_fraction": self.validation_fraction,
            },
            "sweep": self.sweep.to_json(),
        }
        if self.segmenter.checkpoint:
            doc["segmenter"]["checkpoint"] = self.segmenter.checkpoint
        if self.split_file:
            doc["data"]["split_file"] = self.split_file
        if self.root:
            doc["data"]["root"] = self.root
        if self.name:
            doc["name"] = self.name
        if self.kind:
            doc["kind"] = self.kind
        return doc

    def fingerprint(self) -> str:
        return fingerprint(self.to_doc())

    @property
    def data_root(self) -> Path:
        return data_root(self.root)


def parse_config(doc: dict) -> ExperimentConfig:
    _check_keys(doc, TOP_KEYS, "config")
    run = RunConfig.from_flat(doc.get("run", {}))
    seg = doc.get("segmenter", {})
    _check_keys(seg, SEGMENTER_KEYS, "segmenter")
    try:
        segmenter = SegmenterSpec(
            backend=seg.get("backend", "surrogate"),
            variant=seg.get("variant", "B"),
            input_resolution=run.input_resolution,
            checkpoint=seg.get("checkpoint"),
        )
    except ValueError as exc:
        raise ConfigError(f"segmenter: {exc}") from exc
    if segmenter.backend == "foundation" and not segmenter.checkpoint:
        raise ConfigError("segmenter.checkpoint: the foundation backend needs a checkpoint")
    data = doc.get("data", {})
    _check_keys(data, DATA_KEYS, "data")
    if "dataset" not in data:
        raise ConfigError("data.dataset: required")
    selection = data.get("selection", "validation")
    if selection not in SELECTION_MODES:
        raise ConfigError(f"data.selection: expected one of {SELECTION_MODES}, got {selection!r}")
    fraction = data.get("validation_fraction", 0.1)
    if not isinstance(fraction, (int, float)) or not 0 < fraction < 1:
        raise ConfigError("data.validation_fraction: must be in (0, 1)")
    sweep_doc = doc.get("sweep", {})
    _check_keys(sweep_doc, SWEEP_KEYS, "sweep")
    default_test = f"{data['dataset']}/test" if data.get("split_file") else data["dataset"]
    sweep = SweepSpec(
        levels=tuple(sweep_doc.get("levels", SweepSpec().levels)),
        test_sets=tuple(sweep_doc.get("test_sets", (default_test,))),
        runs=tuple(sweep_doc.get("runs", SweepSpec().runs)),
    )
    kind = doc.get("kind")
    if kind is not None and kind not in KINDS:
        raise ConfigError(f"kind: expected one of {KINDS}, got {kind!r}")
    return ExperimentConfig(
        run=run,
        segmenter=segmenter,
        dataset=data["dataset"],
        split_file=data.get("split_file"),
        root=data.get("root"),
        selection=selection,
        validation_fraction=float(fraction),
        sweep=sweep,
        name=doc.get("name"),
        kind=kind,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        else:
            with open(path) as fh:
                doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc)


def _resolve_split(config: ExperimentConfig, root: Path) -> Optional[Path]:
    if not config.split_file:
        return None
    split = Path(config.split_file)
    if not split.is_absolute() and not split.exists():
        split = root / split
    return split


def resolve_datasets(config: ExperimentConfig) -> Tuple[DatasetManifest, Dict[str, DatasetManifest]]:
    """Training pool plus every manifest a test-set name can refer to.

    ``<dataset>/test`` and ``<dataset>/train`` name the sides of the split;
    any other name is a whole dataset directory used as an unseen test set.
    """
    root = config.data_root
    manifest = load_manifest(root, config.dataset)
    split = _resolve_split(config, root)
    named: Dict[str, DatasetManifest] = {}
    if split is not None:
        train, test = split_train_test(manifest, split)
        named[train.name] = train
        named[test.name] = test
    else:
        train = manifest
        named[manifest.name] = manifest
    for name in config.sweep.test_sets:
        if name not in named:
            named[name] = load_manifest(root, name, role="unseen-test")
    return train, named


@dataclass
class ExperimentRecord:
    experiment_id: str
    config_fingerprint: str
    command: str
    artifacts: Dict[str, str] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def complete(self) -> bool:
        return bool(self.artifacts) and all(Path(p).exists() for p in self.artifacts.values())


def experiment_id(command: str, config: ExperimentConfig) -> str:
    prefix = config.name or command
    return f"{prefix}-{config.fingerprint()[:12]}"


class ExperimentIndex:
    """Append-only JSON-lines registry of completed experiments."""

    def __init__(self, root):
        self.root = Path(root)
        self.path = self.root / "index.jsonl"

    def records(self) -> List[ExperimentRecord]:
        if not self.path.exists():
            return []
        with open(self.path) as fh:
            return [ExperimentRecord(**json.loads(line)) for line in fh if line.strip()]

    def find(self, exp_id: str) -> Optional[ExperimentRecord]:
        found = None
        for record in self.records():
            if record.experiment_id == exp_id:
                found = record
        return found

    def get(self, exp_id: str) -> ExperimentRecord:
        record = self.find(exp_id)
        if record is None or not record.complete():
            raise MissingExperiment(f"experiment {exp_id!r} not found or incomplete in {self.path}")
        return record

    def register(self, record: ExperimentRecord) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        line = json.dumps(asdict(record), sort_keys=True) + "\n"
        # one write per record keeps appends line-atomic
        with open(self.path, "a") as fh:
            fh.write(line)

    def experiment_dir(self, exp_id: str) -> Path:
        return self.root / "experiments" / exp_id
