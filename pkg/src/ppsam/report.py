"""Report rendering: curve CSVs, reference-number tables and matplotlib figures."""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ppsam.errors import UnknownKind  # noqa: E402
from ppsam.reference import DEFAULT_GAIN_LEVEL, SOTA_IMPROVEMENT, SOTA_PPSAM_DICE, ZERO_SHOT_GAINS  # noqa: E402
from ppsam.sweep import KINDS, RobustnessCurve, write_curves  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

TITLES = {
    "freeze-ablation": "Transfer learning of segmenter modules",
    "train-perturbation-ablation": "Training-time box perturbation",
    "fewshot-curve": "Few-shot fine-tuning",
    "generalization": "Unseen test sets",
    "scale-comparison": "Encoder scale",
    "sota-comparison": "k-shot DICE vs. published reference",
}

FIGURE_FORMATS = ("png", "svg")

_SHOT = re.compile(r"(?:^|\s)(\d+)-shot$")


def shots_of(model_id: str) -> Optional[int]:
    """Shot count encoded in a curve label (``zero-shot`` is 0)."""
    if model_id.endswith("zero-shot"):
        return 0
    m = _SHOT.search(model_id)
    return int(m.group(1)) if m else None


def _value_at(curve: RobustnessCurve, level: int) -> Optional[float]:
    try:
        return curve.at(level).mean_dice
    except KeyError:
        return None


def gain_rows(curves: Sequence[RobustnessCurve]) -> List[dict]:
    """Measured k-shot minus zero-shot DICE next to each published gain."""
    by_set: Dict[str, Dict[int, RobustnessCurve]] = {}
    for curve in curves:
        k = shots_of(curve.model_id)
        if k is not None:
            by_set.setdefault(curve.test_set, {})[k] = curve
    rows = []
    for ref in ZERO_SHOT_GAINS:
        family = by_set.get(ref.test_set)
        if not family or 0 not in family or ref.k not in family:
            continue
        level = ref.level_px if ref.level_px is not None else DEFAULT_GAIN_LEVEL
        zero, tuned = _value_at(family[0], level), _value_at(family[ref.k], level)
        if zero is None or tuned is None:
            continue
        rows.append({
            "test_set": ref.test_set,
            "k": ref.k,
            "level_px": level,
            "zero_shot_dice": round(zero, 2),
            "k_shot_dice": round(tuned, 2),
            "measured_gain": round(tuned - zero, 2),
            "reference_gain": ref.value,
            "provenance": ref.provenance,
        })
    return rows


def sota_rows(curves: Sequence[RobustnessCurve]) -> List[dict]:
    """Measured k-shot DICE at 25/50 px paired with the stored published constants."""
    rows = []
    for curve in curves:
        k = shots_of(curve.model_id)
        for point in curve.points:
            refs = [
                r for r in SOTA_PPSAM_DICE + SOTA_IMPROVEMENT
                if r.k == k and r.level_px == point.perturbation_level
            ]
            for ref in refs or [None]:
                rows.append({
                    "model_id": curve.model_id,
                    "test_set": curve.test_set,
                    "k": "" if k is None else k,
                    "level_px": point.perturbation_level,
                    "measured_dice": f"{point.mean_dice:.2f}",
                    "measured_std": f"{point.std_dice:.2f}",
                    "reference_kind": "" if ref is None else (
                        "ppsam_dice" if ref in SOTA_PPSAM_DICE else "improvement_over_sota"
                    ),
                    "reference_value": "" if ref is None else ref.value,
                    "provenance": "" if ref is None else ref.provenance,
                })
    return rows


def _write_rows(rows: List[dict], path: Path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        writer.writerows(rows)


def plot_curves(curves: Sequence[RobustnessCurve], title: str = "", show_std: bool = False):
    test_sets = list(dict.fromkeys(c.test_set for c in curves))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(
            1, len(test_sets), figsize=(4.2 * len(test_sets), 3.2), squeeze=False, sharey=True
        )
        for ax, name in zip(axes[0], test_sets):
            for curve in (c for c in curves if c.test_set == name):
                levels = [p.perturbation_level for p in curve.points]
                means = curve.means
                ax.plot(levels, means, marker="o", markersize=2.5, linewidth=1.2, label=curve.model_id)
                if show_std:
                    stds = [p.std_dice for p in curve.points]
                    ax.fill_between(
                        levels, [m - s for m, s in zip(means, stds)], [m + s for m, s in zip(means, stds)],
                        alpha=0.15,
                    )
            ax.set_title(name)
            ax.set_xlabel("inference box perturbation (px)")
            ax.set_ylim(0, 100)
        axes[0][0].set_ylabel("DICE (%)")
        axes[0][-1].legend(loc="lower left", frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
    return fig


def plot_sota(curves: Sequence[RobustnessCurve], title: str = ""):
    labels = [c.model_id for c in curves]
    levels = sorted({p.perturbation_level for c in curves for p in c.points})
    width = 0.8 / max(len(levels), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels) + 1.5), 3.2))
        for j, level in enumerate(levels):
            xs = [i + (j - (len(levels) - 1) / 2) * width for i in range(len(labels))]
            values = [_value_at(c, level) for c in curves]
            values = [math.nan if v is None else v for v in values]
            ax.bar(xs, values, width=width, label=f"{level} px")
        for ref in SOTA_PPSAM_DICE:
            for i, curve in enumerate(curves):
                if shots_of(curve.model_id) == ref.k:
                    ax.plot([i], [ref.value], marker="*", color="k", markersize=7)
        ax.plot([], [], marker="*", color="k", linestyle="none", label="published, 50 px")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("DICE (%)")
        ax.set_ylim(0, 100)
        ax.legend(frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
    return fig


def write_report(
    kind: str, curves: Sequence[RobustnessCurve], out_dir, show_std: bool = False
) -> Dict[str, Path]:
    """Write ``<kind>_curves.csv``, the figure files and any reference table for ``kind``."""
    if kind not in KINDS:
        raise UnknownKind(f"unknown report kind {kind!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"curves": out / f"{kind}_curves.csv"}
    write_curves(curves, paths["curves"])
    if kind == "sota-comparison":
        rows = sota_rows(curves)
        paths["reference"] = out / f"{kind}_reference.csv"
        _write_rows(rows, paths["reference"], list(rows[0]) if rows else ["model_id"])
        fig = plot_sota(curves, TITLES[kind])
    else:
        if kind in ("fewshot-curve", "generalization"):
            rows = gain_rows(curves)
            paths["gains"] = out / f"{kind}_gains.csv"
            _write_rows(
                rows, paths["gains"],
                ["test_set", "k", "level_px", "zero_shot_dice", "k_shot_dice", "measured_gain",
                 "reference_gain", "provenance"],
            )
        fig = plot_curves(curves, TITLES[kind], show_std=show_std)
    for fmt in FIGURE_FORMATS:
        paths[fmt] = out / f"{kind}.{fmt}"
        fig.savefig(paths[fmt])
    plt.close(fig)
    return paths
