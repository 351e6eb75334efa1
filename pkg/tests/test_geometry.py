import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ppsam.errors import DegenerateBox, EmptyMask
from ppsam.geometry import (
    BoundingBox,
    PerturbationPolicy,
    extract_bbox,
    perturb_fixed,
    perturb_variable,
    rescale_bbox,
)

from conftest import random_blob_mask


def scan_bbox(mask):
    """Exhaustive pixel scan, independent of the numpy reductions under test."""
    xs, ys = [], []
    for r in range(mask.shape[0]):
        for c in range(mask.shape[1]):
            if mask[r, c]:
                xs.append(c)
                ys.append(r)
    return (min(xs), min(ys), max(xs) + 1, max(ys) + 1)


@st.composite
def boxes_in_image(draw, max_side=300):
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    x0 = draw(st.integers(0, width - 1))
    y0 = draw(st.integers(0, height - 1))
    x1 = draw(st.integers(x0 + 1, width))
    y1 = draw(st.integers(y0 + 1, height))
    return BoundingBox(x0, y0, x1, y1), (width, height)


def test_extract_single_pixel():
    mask = np.zeros((8, 8), dtype=bool)
    mask[3, 5] = True
    assert extract_bbox(mask) == BoundingBox(5, 3, 6, 4)


def test_extract_full_frame():
    assert extract_bbox(np.ones((4, 6), dtype=bool)) == BoundingBox(0, 0, 6, 4)


def test_extract_empty_mask_raises():
    with pytest.raises(EmptyMask):
        extract_bbox(np.zeros((5, 5), dtype=bool))


def test_extract_matches_scan_on_random_blobs(rng):
    for _ in range(100):
        h, w = rng.integers(1, 40, size=2)
        mask = random_blob_mask(rng, h, w, density=rng.uniform(0.01, 0.3))
        assert tuple(extract_bbox(mask)) == scan_bbox(mask)


def test_extract_is_tight(rng):
    for _ in range(50):
        mask = random_blob_mask(rng, 9, 11, density=0.1)
        box = extract_bbox(mask)
        inside = box.to_mask((11, 9))
        assert not (mask & ~inside).any()
        # shrinking any side loses a foreground pixel
        for shrunk in (
            (box.x_min + 1, box.y_min, box.x_max, box.y_max),
            (box.x_min, box.y_min + 1, box.x_max, box.y_max),
            (box.x_min, box.y_min, box.x_max - 1, box.y_max),
            (box.x_min, box.y_min, box.x_max, box.y_max - 1),
        ):
            x0, y0, x1, y1 = shrunk
            sub = np.zeros_like(mask)
            sub[y0:max(y1, y0), x0:max(x1, x0)] = True
            assert (mask & ~sub).any()


def test_perturb_variable_zero_is_identity(rng):
    box = BoundingBox(3, 4, 20, 30)
    assert perturb_variable(box, 0, rng, (64, 64)) == box
    assert perturb_fixed(box, 0, (64, 64)) == box


def test_perturb_variable_envelope_and_uniformity():
    rng = np.random.default_rng(0)
    box = BoundingBox(10, 10, 20, 20)
    big = BoundingBox(60, 60, 70, 70)  # far from the edges so offsets are unclipped
    offsets = np.zeros((10_000, 4), dtype=int)
    for i in range(10_000):
        out = perturb_variable(box, 50, rng, (1024, 1024))
        assert out.contains(box)
        assert 0 <= out.x_min <= 10 and 0 <= out.y_min <= 10
        assert 20 <= out.x_max <= 70 and 20 <= out.y_max <= 70
        far = perturb_variable(big, 50, rng, (1024, 1024))
        offsets[i] = (60 - far.x_min, 60 - far.y_min, far.x_max - 70, far.y_max - 70)
    for side in range(4):
        counts = np.bincount(offsets[:, side], minlength=51)
        assert counts.size == 51
        assert chisquare(counts).pvalue > 1e-3
    # sides drawn independently: correlation between sides is negligible
    corr = np.corrcoef(offsets.T)
    assert np.abs(corr - np.eye(4)).max() < 0.05


def test_perturb_variable_saturates_at_image_edges(rng):
    box = BoundingBox(0, 0, 5, 5)
    for _ in range(100):
        assert perturb_variable(box, 50, rng, (5, 5)) == box


def test_perturb_variable_reproducible():
    box = BoundingBox(100, 100, 150, 180)
    a = np.random.default_rng(42)
    b = np.random.default_rng(42)
    seq_a = [perturb_variable(box, 50, a, (512, 512)) for _ in range(20)]
    seq_b = [perturb_variable(box, 50, b, (512, 512)) for _ in range(20)]
    assert seq_a == seq_b


@pytest.mark.parametrize(
    "box, p, size, expected",
    [
        ((100, 100, 200, 200), 30, (1024, 1024), (70, 70, 230, 230)),
        ((10, 10, 200, 200), 50, (512, 512), (0, 0, 250, 250)),
        ((5, 6, 7, 8), 0, (16, 16), (5, 6, 7, 8)),
    ],
)
def test_perturb_fixed_examples(box, p, size, expected):
    assert tuple(perturb_fixed(BoundingBox(*box), p, size)) == expected


def test_perturb_fixed_monotone_random_pairs(rng):
    for _ in range(1000):
        w, h = rng.integers(2, 400, size=2)
        x0, y0 = rng.integers(0, w - 1), rng.integers(0, h - 1)
        box = BoundingBox(x0, y0, rng.integers(x0 + 1, w + 1), rng.integers(y0 + 1, h + 1))
        p1, p2 = sorted(rng.integers(0, 120, size=2))
        small, large = perturb_fixed(box, p1, (w, h)), perturb_fixed(box, p2, (w, h))
        assert large.contains(small)


@settings(max_examples=200, deadline=None)
@given(boxes_in_image(), st.integers(0, 150), st.integers(0, 2**31 - 1))
def test_perturbations_stay_clipped(box_and_size, magnitude, seed):
    box, size = box_and_size
    rng = np.random.default_rng(seed)
    for out in (perturb_fixed(box, magnitude, size), perturb_variable(box, magnitude, rng, size)):
        assert out.fits(size)
        assert out.contains(box)


def test_policy_apply_dispatch(rng):
    box = BoundingBox(10, 10, 20, 20)
    assert PerturbationPolicy("none", 99).apply(box, (64, 64), rng) == box
    assert PerturbationPolicy("fixed", 3).apply(box, (64, 64), rng) == BoundingBox(7, 7, 23, 23)
    assert PerturbationPolicy("variable", 0).apply(box, (64, 64), rng) == box
    with pytest.raises(ValueError):
        PerturbationPolicy("shrink", 3)


def test_rescale_examples():
    assert rescale_bbox(BoundingBox(0, 0, 384, 288), (384, 288), (1024, 1024)) == BoundingBox(0, 0, 1024, 1024)
    assert rescale_bbox(BoundingBox(128, 128, 256, 256), (512, 512), (1024, 1024)) == BoundingBox(256, 256, 512, 512)


def test_rescale_round_trip_drift(rng):
    src, dst = (384, 288), (1024, 1024)
    for _ in range(500):
        x0, y0 = rng.integers(0, 383), rng.integers(0, 287)
        box = BoundingBox(x0, y0, rng.integers(x0 + 1, 385), rng.integers(y0 + 1, 289))
        back = rescale_bbox(rescale_bbox(box, src, dst), dst, src)
        assert max(abs(a - b) for a, b in zip(back, box)) <= 1
        assert back.contains(box)


def test_rescale_never_loses_coverage(rng):
    for _ in range(300):
        src = tuple(int(v) for v in rng.integers(16, 600, size=2))
        dst = tuple(int(v) for v in rng.integers(16, 600, size=2))
        x0, y0 = rng.integers(0, src[0] - 1), rng.integers(0, src[1] - 1)
        box = BoundingBox(x0, y0, rng.integers(x0 + 1, src[0] + 1), rng.integers(y0 + 1, src[1] + 1))
        out = rescale_bbox(box, src, dst)
        assert out.fits(dst)
        # continuous image of the box lies inside the rescaled integer box
        sx, sy = dst[0] / src[0], dst[1] / src[1]
        assert out.x_min <= box.x_min * sx + 1e-9 and out.x_max >= box.x_max * sx - 1e-9
        assert out.y_min <= box.y_min * sy + 1e-9 and out.y_max >= box.y_max * sy - 1e-9


def test_degenerate_box_rejected():
    with pytest.raises(DegenerateBox):
        BoundingBox(5, 5, 5, 9)
    with pytest.raises(ValueError):
        rescale_bbox(BoundingBox(0, 0, 1, 1), (0, 10), (10, 10))


def test_box_json_round_trip():
    box = BoundingBox(1, 2, 3, 4)
    assert json.loads(json.dumps(box.as_list())) == [1, 2, 3, 4]
    assert BoundingBox.from_list(box.as_list()) == box
