"""``ppsam`` command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from ppsam import synthetic
from ppsam.data import FULL, FewShotSpec, carve_validation, load_gt_mask, load_manifest, sample_fewshot, split_train_test, write_manifest
from ppsam.errors import ConfigError, EmptyMask, MissingExperiment, PPSAMError
from ppsam.experiment import (
    ExperimentConfig,
    ExperimentIndex,
    ExperimentRecord,
    data_root,
    experiment_id,
    load_config,
    output_root,
    resolve_datasets,
)
from ppsam.finetune import train, write_training_log
from ppsam.geometry import extract_bbox
from ppsam.report import write_report
from ppsam.segmenter import build_segmenter
from ppsam.sweep import RobustnessCurve, config_for_run, experiment_matrix, read_curves, run_sweep, write_curves

log = logging.getLogger("ppsam")


def cmd_extract_bbox(dataset: str, out, root=None) -> Path:
    """Write ``<dataset>_bboxes.jsonl`` and the ``<dataset>_rejects.jsonl`` sidecar into ``out``."""
    manifest = load_manifest(data_root(root), dataset)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    boxes_path = out / f"{dataset}_bboxes.jsonl"
    rejects_path = out / f"{dataset}_rejects.jsonl"
    with open(boxes_path, "w") as boxes, open(rejects_path, "w") as rejects:
        for record in manifest:
            try:
                box = extract_bbox(load_gt_mask(record))
            except EmptyMask:
                rejects.write(json.dumps({"sample_id": record.sample_id, "reason": "empty mask"}) + "\n")
                continue
            boxes.write(json.dumps({"sample_id": record.sample_id, "bbox": box.as_list()}) + "\n")
    return boxes_path


def cmd_sample_fewshot(dataset: str, k, seed: int, out, root=None, split_file=None) -> Path:
    base = data_root(root)
    manifest = load_manifest(base, dataset)
    if split_file:
        manifest, _ = split_train_test(manifest, split_file)
    try:
        spec = FewShotSpec(k, seed)
    except ValueError as exc:
        raise ConfigError(f"k: {exc}") from exc
    sample = sample_fewshot(manifest, spec)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{dataset}_{k}shot_seed{seed}.jsonl"
    write_manifest(sample, path)
    return path


def _selection_sets(config: ExperimentConfig, train_set, named):
    if config.selection == "test":
        return train_set, named[config.sweep.test_sets[0]]
    return carve_validation(train_set, config.validation_fraction, seed=0)


def cmd_finetune(config_path, out=None, force: bool = False) -> ExperimentRecord:
    config = load_config(config_path)
    if config.run.fewshot.zero_shot:
        raise ConfigError("k: zero-shot (k=0) has nothing to fine-tune; use the sweep command")
    index = ExperimentIndex(output_root(out))
    exp_id = experiment_id("finetune", config)
    existing = index.find(exp_id)
    if existing is not None and existing.complete() and not force:
        log.info("reusing %s", exp_id)
        return existing
    train_set, named = resolve_datasets(config)
    pool, validation = _selection_sets(config, train_set, named)
    model = build_segmenter(config.segmenter, seed=config.run.run_seed)
    best, records = train(model, sample_fewshot(pool, config.run.fewshot), config.run, validation)
    exp_dir = index.experiment_dir(exp_id)
    exp_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "config": exp_dir / "config.json",
        "checkpoint": exp_dir / "checkpoint.pt",
        "log": exp_dir / "training_log.csv",
    }
    artifacts["config"].write_text(json.dumps(config.to_doc(), indent=2, sort_keys=True))
    best.save(artifacts["checkpoint"])
    write_training_log(records, artifacts["log"])
    record = ExperimentRecord(exp_id, config.fingerprint(), "finetune", {k: str(v) for k, v in artifacts.items()})
    index.register(record)
    return record


def _sweep_entries(config: ExperimentConfig):
    if config.kind is None:
        return [(config.name or "model", config.run, config.sweep, None)]
    return list(experiment_matrix(config.kind, config.run, config.sweep))


def cmd_sweep(config_path, out=None, force: bool = False) -> ExperimentRecord:
    config = load_config(config_path)
    index = ExperimentIndex(output_root(out))
    exp_id = experiment_id("sweep", config)
    existing = index.find(exp_id)
    if existing is not None and existing.complete() and not force:
        log.info("reusing %s", exp_id)
        return existing
    entries = _sweep_entries(config)
    needed = {name for _, _, sweep, _ in entries for name in sweep.test_sets}
    train_set, named = resolve_datasets(replace(config, sweep=replace(config.sweep, test_sets=tuple(sorted(needed)))))
    exp_dir = index.experiment_dir(exp_id)
    exp_dir.mkdir(parents=True, exist_ok=True)
    selection_validation = named[config.sweep.test_sets[0]] if config.selection == "test" else None
    curves: List[RobustnessCurve] = []
    for label, run_config, sweep, variant in entries:
        segmenter = replace(config.segmenter, variant=variant) if variant else config.segmenter
        run_configs = [config_for_run(run_config, seed) for seed in sweep.runs]
        curves += run_sweep(
            sweep,
            run_configs,
            train_set,
            named,
            segmenter,
            model_id=label,
            validation_set=selection_validation,
            checkpoint_dir=exp_dir / "checkpoints",
            validation_fraction=config.validation_fraction,
        )
    artifacts = {"config": exp_dir / "config.json", "curves": exp_dir / "curves.csv"}
    artifacts["config"].write_text(json.dumps(config.to_doc(), indent=2, sort_keys=True))
    write_curves(curves, artifacts["curves"])
    if config.kind:
        for key, path in write_report(config.kind, curves, exp_dir / "report").items():
            artifacts[f"report_{key}"] = path
    record = ExperimentRecord(exp_id, config.fingerprint(), "sweep", {k: str(v) for k, v in artifacts.items()})
    index.register(record)
    return record


def cmd_report(experiment_ids: Sequence[str], kind: str, out=None, report_dir=None, show_std=False):
    index = ExperimentIndex(output_root(out))
    if not experiment_ids:
        raise MissingExperiment("report needs at least one --experiment")
    curves: List[RobustnessCurve] = []
    for exp_id in experiment_ids:
        record = index.get(exp_id)
        if "curves" not in record.artifacts:
            raise MissingExperiment(f"experiment {exp_id!r} has no curves (run the sweep command)")
        curves += read_curves(record.artifacts["curves"])
    target = Path(report_dir) if report_dir else index.root / "reports" / kind
    return write_report(kind, curves, target, show_std=show_std)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _k(value: str):
    if value == FULL:
        return FULL
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k must be an integer or {FULL!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppsam", description="Perturbed-prompt fine-tuning and robustness sweeps.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-bbox", help="tight ground-truth boxes of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--data-root")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sample-fewshot", help="write a k-shot manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("-k", type=_k, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-file")
    p.add_argument("--data-root")
    p.add_argument("--out", required=True, help="output directory")

    for name, help_text in (("finetune", "fine-tune one model"), ("sweep", "robustness sweep over runs")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output root (default $PPSAM_OUT or ./ppsam_out)")
        p.add_argument("--force", action="store_true", help="re-run even if a completed record exists")

    p = sub.add_parser("report", help="CSV + figures for completed sweeps")
    p.add_argument("--kind", required=True)
    p.add_argument("--experiment", action="append", default=[], dest="experiments")
    p.add_argument("--out", help="output root (default $PPSAM_OUT or ./ppsam_out)")
    p.add_argument("--report-dir")
    p.add_argument("--show-std", action="store_true")

    p = sub.add_parser("make-synthetic", help="write a synthetic image/mask dataset")
    p.add_argument("--out", required=True, help="dataset root")
    p.add_argument("--name", default="shapes")
    p.add_argument("--count", type=int, default=250)
    p.add_argument("--test", type=int, default=50, help="ids put on the test side of split.json")
    p.add_argument("--kind", choices=synthetic.KINDS, default="shapes")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "extract-bbox":
            print(cmd_extract_bbox(args.dataset, args.out, args.data_root))
        elif args.command == "sample-fewshot":
            print(cmd_sample_fewshot(args.dataset, args.k, args.seed, args.out, args.data_root, args.split_file))
        elif args.command == "finetune":
            record = cmd_finetune(args.config, args.out, args.force)
            print(json.dumps({"experiment_id": record.experiment_id, **record.artifacts}, indent=2))
        elif args.command == "sweep":
            record = cmd_sweep(args.config, args.out, args.force)
            print(json.dumps({"experiment_id": record.experiment_id, **record.artifacts}, indent=2))
        elif args.command == "report":
            paths = cmd_report(args.experiments, args.kind, args.out, args.report_dir, args.show_std)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
        elif args.command == "make-synthetic":
            print(synthetic.make_dataset(args.out, args.name, args.count, args.seed, args.kind, n_test=args.test))
    except PPSAMError as exc:
        print(f"ppsam: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"ppsam: unexpected failure: {exc!r}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
