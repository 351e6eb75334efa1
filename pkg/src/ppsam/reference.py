"""Published reference numbers, kept as literal constants for report annotation.

Nothing here is recomputed; every value carries a provenance string.
"""

from __future__ import annotations

from typing import NamedTuple, Optional


class ReferenceValue(NamedTuple):
    value: float
    k: int
    level_px: Optional[int]
    test_set: str
    provenance: str


# Published k-shot DICE (%) on Kvasir at 50 px inference perturbation.
SOTA_PPSAM_DICE = (
    ReferenceValue(74.5, 1, 50, "Kvasir/test", "published 1-shot DICE, 50 px inference perturbation"),
    ReferenceValue(77.0, 5, 50, "Kvasir/test", "published 5-shot DICE, 50 px inference perturbation"),
    ReferenceValue(81.6, 10, 50, "Kvasir/test", "published 10-shot DICE, 50 px inference perturbation"),
)

# DICE improvement (%) of k-shot fine-tuning over PVT-CASCADE on Kvasir.
SOTA_IMPROVEMENT = (
    ReferenceValue(26.0, 1, 50, "Kvasir/test", "1-shot over PVT-CASCADE, 50 px"),
    ReferenceValue(7.0, 5, 50, "Kvasir/test", "5-shot over PVT-CASCADE, 50 px"),
    ReferenceValue(5.0, 10, 50, "Kvasir/test", "10-shot over PVT-CASCADE, 50 px"),
    ReferenceValue(32.0, 1, 25, "Kvasir/test", "1-shot over PVT-CASCADE, 25 px"),
    ReferenceValue(11.0, 5, 25, "Kvasir/test", "5-shot over PVT-CASCADE, 25 px"),
    ReferenceValue(9.0, 10, 25, "Kvasir/test", "10-shot over PVT-CASCADE, 25 px"),
)

# DICE gain (%) of k-shot fine-tuning over zero-shot inference.
ZERO_SHOT_GAINS = (
    ReferenceValue(20.0, 1, 50, "Kvasir/test", "1-shot over zero-shot, Kvasir, 50 px"),
    ReferenceValue(37.0, 1, 100, "Kvasir/test", "1-shot over zero-shot, Kvasir, 100 px"),
    ReferenceValue(60.0, 50, 100, "Kvasir/test", "50-shot over zero-shot, Kvasir, 100 px"),
    ReferenceValue(24.0, 1, None, "ClinicDB", "1-shot over zero-shot, ClinicDB, level not stated"),
    ReferenceValue(43.5, 50, None, "ClinicDB", "50-shot over zero-shot, ClinicDB, level not stated"),
    ReferenceValue(19.0, 1, 100, "EndoScene", "1-shot over zero-shot, EndoScene, 100 px"),
    ReferenceValue(50.0, 50, 100, "EndoScene", "50-shot over zero-shot, EndoScene, 100 px"),
    ReferenceValue(27.0, 1, 100, "ColonDB", "1-shot over zero-shot, ColonDB, 100 px"),
    ReferenceValue(45.0, 50, 100, "ColonDB", "50-shot over zero-shot, ColonDB, 100 px"),
)

# Gains quoted without a level are compared at this level.
DEFAULT_GAIN_LEVEL = 100
