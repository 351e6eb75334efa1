"""Robustness sweeps: DICE versus fixed prompt perturbation, aggregated over runs."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from ppsam.data import FULL, SHOT_GRID, ZERO_SHOT, DatasetManifest, FewShotSpec, carve_validation, sample_fewshot
from ppsam.errors import ConfigError, UnknownKind
from ppsam.evaluate import evaluate_at_level, evaluate_prepared, prepare_for_model
from ppsam.finetune import FREEZE_ABLATION, Checkpoint, RunConfig, train
from ppsam.geometry import PerturbationPolicy
from ppsam.metrics import CurvePoint, aggregate_runs
from ppsam.segmenter import SegmenterSpec, build_segmenter

log = logging.getLogger(__name__)

DEFAULT_LEVELS = tuple(range(0, 101, 5))
DEFAULT_RUNS = (0, 1, 2, 3, 4)
UNSEEN_TEST_SETS = ("ClinicDB", "EndoScene", "ColonDB")
CURVE_COLUMNS = ("model_id", "test_set", "level_px", "mean_dice", "std_dice", "run_count")
KINDS = (
    "freeze-ablation",
    "train-perturbation-ablation",
    "fewshot-curve",
    "generalization",
    "scale-comparison",
    "sota-comparison",
)

__all__ = [
    "CURVE_COLUMNS",
    "KINDS",
    "MatrixEntry",
    "RobustnessCurve",
    "SweepSpec",
    "evaluate_at_level",
    "experiment_matrix",
    "read_curves",
    "run_sweep",
    "write_curves",
]


@dataclass(frozen=True)
class SweepSpec:
    levels: Tuple[int, ...] = DEFAULT_LEVELS
    test_sets: Tuple[str, ...] = ("Kvasir/test",)
    runs: Tuple[int, ...] = DEFAULT_RUNS

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        object.__setattr__(self, "test_sets", tuple(self.test_sets))
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if not self.levels or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels: must be non-empty and strictly increasing")
        if self.levels[0] < 0:
            raise ConfigError("levels: must be >= 0")
        if not self.runs:
            raise ConfigError("runs: at least one run seed is required")
        if not self.test_sets:
            raise ConfigError("test_sets: at least one test set is required")

    def to_json(self) -> dict:
        return {"levels": list(self.levels), "test_sets": list(self.test_sets), "runs": list(self.runs)}


@dataclass
class RobustnessCurve:
    model_id: str
    test_set: str
    points: List[CurvePoint] = field(default_factory=list)

    def at(self, level: int) -> CurvePoint:
        for point in self.points:
            if point.perturbation_level == level:
                return point
        raise KeyError(level)

    @property
    def means(self) -> List[float]:
        return [p.mean_dice for p in self.points]


def config_for_run(config: RunConfig, seed: int) -> RunConfig:
    """Same recipe, new run seed; the few-shot sample is re-drawn per run."""
    return replace(config, run_seed=seed, fewshot=replace(config.fewshot, seed=seed))


def obtain_model(
    segmenter: SegmenterSpec,
    config: RunConfig,
    pool: DatasetManifest,
    validation: DatasetManifest,
    checkpoint_dir: Optional[Path] = None,
):
    """Zero-shot weights, a cached checkpoint, or a freshly fine-tuned model."""
    model = build_segmenter(segmenter, seed=config.run_seed)
    if config.fewshot.zero_shot:
        return model
    path = None
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / f"{config.fingerprint()[:16]}.pt"
        if path.exists():
            model.load_state_dict(Checkpoint.load(path).weights)
            return model
    best, _ = train(model, sample_fewshot(pool, config.fewshot), config, validation)
    model.load_state_dict(best.weights)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        best.save(path)
    return model


def run_sweep(
    spec: SweepSpec,
    run_configs: Sequence[RunConfig],
    train_set: Optional[DatasetManifest],
    test_sets: Dict[str, DatasetManifest],
    segmenter: SegmenterSpec,
    model_id: str = "model",
    validation_set: Optional[DatasetManifest] = None,
    checkpoint_dir: Optional[Path] = None,
    validation_fraction: float = 0.1,
) -> List[RobustnessCurve]:
    """Fine-tune (or load) one model per run, score it at every level, aggregate.

    ``run_configs`` holds one config per entry of ``spec.runs``. Without an
    explicit ``validation_set`` one is carved from ``train_set`` and few-shot
    samples are drawn from the remainder.
    """
    if len(run_configs) != len(spec.runs):
        raise ConfigError(f"runs: expected {len(spec.runs)} run configs, got {len(run_configs)}")
    missing = [name for name in spec.test_sets if name not in test_sets]
    if missing:
        raise ConfigError(f"test_sets: no manifest for {missing}")
    zero_shot = all(c.fewshot.zero_shot for c in run_configs)
    pool = validation = None
    if not zero_shot:
        if train_set is None:
            raise ConfigError("train_set: fine-tuning runs need a training set")
        if validation_set is None:
            pool, validation = carve_validation(train_set, validation_fraction, seed=0)
        else:
            pool, validation = train_set, validation_set

    per_level: Dict[str, Dict[int, List[float]]] = {
        name: {p: [] for p in spec.levels} for name in spec.test_sets
    }
    prepared_cache = {}
    for config in run_configs:
        model = obtain_model(segmenter, config, pool, validation, checkpoint_dir)
        for name in spec.test_sets:
            key = (name, model.input_resolution)
            if key not in prepared_cache:
                prepared_cache[key] = prepare_for_model(model, test_sets[name])
            samples = prepared_cache[key]
            for p in spec.levels:
                per_level[name][p].append(evaluate_prepared(model, samples, p))
        log.info("%s run %d done", model_id, config.run_seed)

    curves = []
    for name in spec.test_sets:
        points = [aggregate_runs(per_level[name][p], level=p) for p in spec.levels]
        curves.append(RobustnessCurve(model_id, name, points))
    return curves


class MatrixEntry(NamedTuple):
    label: str
    config: RunConfig
    sweep: SweepSpec
    variant: Optional[str] = None


def _with_k(config: RunConfig, k) -> RunConfig:
    return replace(config, fewshot=FewShotSpec(k, config.fewshot.seed))


def _k_label(k) -> str:
    if k == ZERO_SHOT:
        return "zero-shot"
    return "full" if k == FULL else f"{k}-shot"


def experiment_matrix(
    kind: str, base: RunConfig = RunConfig(), sweep: SweepSpec = SweepSpec()
) -> List[MatrixEntry]:
    """Config grid behind one results figure, built on top of ``base``."""
    if kind == "freeze-ablation":
        return [MatrixEntry(f.label, replace(base, freeze=f), sweep) for f in FREEZE_ABLATION]
    if kind == "train-perturbation-ablation":
        entries = []
        for px in (0, 10, 20, 30, 40, 50):
            policy = PerturbationPolicy("fixed", px) if px else PerturbationPolicy("none", 0)
            entries.append(MatrixEntry(f"train {px}px", replace(base, train_perturbation=policy), sweep))
        variable = PerturbationPolicy("variable", 50)
        entries.append(MatrixEntry("train 0-50px", replace(base, train_perturbation=variable), sweep))
        return entries
    if kind in ("fewshot-curve", "generalization"):
        if kind == "generalization":
            sweep = replace(sweep, test_sets=UNSEEN_TEST_SETS)
        shots = (ZERO_SHOT,) + SHOT_GRID + (FULL,)
        return [MatrixEntry(_k_label(k), _with_k(base, k), sweep) for k in shots]
    if kind == "scale-comparison":
        return [
            MatrixEntry(f"{variant} {_k_label(k)}", _with_k(base, k), sweep, variant)
            for variant in ("B", "L")
            for k in (ZERO_SHOT, FULL)
        ]
    if kind == "sota-comparison":
        sota_sweep = replace(sweep, levels=(25, 50))
        return [MatrixEntry(_k_label(k), _with_k(base, k), sota_sweep) for k in SHOT_GRID + (FULL,)]
    raise UnknownKind(f"unknown experiment kind {kind!r}; expected one of {KINDS}")


def write_curves(curves: Sequence[RobustnessCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for curve in curves:
            for p in curve.points:
                writer.writerow(
                    [curve.model_id, curve.test_set, p.perturbation_level,
                     f"{p.mean_dice:.2f}", f"{p.std_dice:.2f}", p.run_count]
                )


def read_curves(path) -> List[RobustnessCurve]:
    curves: Dict[Tuple[str, str], RobustnessCurve] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["model_id"], row["test_set"])
            curve = curves.setdefault(key, RobustnessCurve(*key))
            curve.points.append(
                CurvePoint(int(row["level_px"]), float(row["mean_dice"]), float(row["std_dice"]), int(row["run_count"]))
            )
    for curve in curves.values():
        curve.points.sort(key=lambda p: p.perturbation_level)
    return list(curves.values())
