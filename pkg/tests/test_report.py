import csv

import pytest

from ppsam.errors import UnknownKind
from ppsam.metrics import aggregate_runs
from ppsam.reference import SOTA_IMPROVEMENT, SOTA_PPSAM_DICE, ZERO_SHOT_GAINS
from ppsam.report import gain_rows, shots_of, sota_rows, write_report
from ppsam.sweep import DEFAULT_LEVELS, RobustnessCurve


def flat_curve(model_id, test_set, value, levels=DEFAULT_LEVELS):
    return RobustnessCurve(model_id, test_set, [aggregate_runs([value, value + 2], p) for p in levels])


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_reference_constants():
    assert [r.value for r in SOTA_PPSAM_DICE] == [74.5, 77.0, 81.6]
    assert [(r.value, r.level_px) for r in SOTA_IMPROVEMENT] == [
        (26.0, 50), (7.0, 50), (5.0, 50), (32.0, 25), (11.0, 25), (9.0, 25)
    ]
    kvasir = {(r.k, r.level_px): r.value for r in ZERO_SHOT_GAINS if r.test_set == "Kvasir/test"}
    assert kvasir == {(1, 50): 20.0, (1, 100): 37.0, (50, 100): 60.0}


@pytest.mark.parametrize("label,k", [("zero-shot", 0), ("1-shot", 1), ("B 50-shot", 50), ("full", None), ("B full", None)])
def test_shots_of(label, k):
    assert shots_of(label) == k


def test_gain_rows_measure_difference():
    curves = [flat_curve("zero-shot", "Kvasir/test", 30.0), flat_curve("1-shot", "Kvasir/test", 55.0),
              flat_curve("50-shot", "Kvasir/test", 80.0)]
    rows = gain_rows(curves)
    assert [(r["k"], r["level_px"], r["measured_gain"], r["reference_gain"]) for r in rows] == [
        (1, 50, 25.0, 20.0), (1, 100, 25.0, 37.0), (50, 100, 50.0, 60.0)
    ]


def test_sota_rows_attach_reference_values():
    curves = [flat_curve(f"{k}-shot", "Kvasir/test", 60.0, levels=(25, 50)) for k in (1, 5, 10)]
    rows = sota_rows(curves)
    at50 = {(r["k"], r["reference_kind"]): r["reference_value"] for r in rows if r["level_px"] == 50}
    assert at50[(1, "ppsam_dice")] == 74.5 and at50[(5, "ppsam_dice")] == 77.0 and at50[(10, "ppsam_dice")] == 81.6
    assert at50[(1, "improvement_over_sota")] == 26.0
    at25 = {r["k"]: r["reference_value"] for r in rows if r["level_px"] == 25}
    assert at25 == {1: 32.0, 5: 11.0, 10: 9.0}


@pytest.mark.parametrize("kind", ["fewshot-curve", "freeze-ablation", "sota-comparison"])
def test_write_report_files(tmp_path, kind):
    levels = (25, 50) if kind == "sota-comparison" else DEFAULT_LEVELS
    curves = [flat_curve(label, "Kvasir/test", v, levels) for label, v in (("zero-shot", 20.0), ("1-shot", 50.0))]
    paths = write_report(kind, curves, tmp_path, show_std=True)
    assert paths["png"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert b"<svg" in paths["svg"].read_bytes()[:500]
    rows = read(paths["curves"])
    assert len(rows) == 2 * len(levels)
    if kind == "fewshot-curve":
        gains = read(paths["gains"])
        assert [float(r["reference_gain"]) for r in gains] == [20.0, 37.0]
    if kind == "sota-comparison":
        assert "74.5" in paths["reference"].read_text()


def test_unknown_kind(tmp_path):
    with pytest.raises(UnknownKind):
        write_report("histogram", [], tmp_path)
