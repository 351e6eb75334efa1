import numpy as np
import pytest
import torch
from PIL import Image

from ppsam.data import load_manifest
from ppsam.synthetic import make_dataset


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    torch.set_num_threads(1)


def random_blob_mask(rng, height, width, density=0.15):
    """Random mask with at least one foreground pixel."""
    mask = rng.random((height, width)) < density
    if not mask.any():
        mask[rng.integers(height), rng.integers(width)] = True
    return mask


def write_rect_dataset(root, name, boxes, size):
    """One image/mask pair per ``(x0, y0, x1, y1)`` box, all of ``size`` (w, h)."""
    base = root / name
    (base / "images").mkdir(parents=True)
    (base / "masks").mkdir(parents=True)
    w, h = size
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        mask = np.zeros((h, w), np.uint8)
        mask[y0:y1, x0:x1] = 255
        Image.fromarray(np.zeros((h, w, 3), np.uint8)).save(base / "images" / f"s{i:03d}.png")
        Image.fromarray(mask).save(base / "masks" / f"s{i:03d}.png")
    return load_manifest(root, name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shapes_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    make_dataset(root, "shapes", 40, seed=3, kind="shapes", n_test=10)
    return root


@pytest.fixture(scope="session")
def rect_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("rects")
    make_dataset(root, "rects", 12, seed=5, kind="rectangles", sizes=[(64, 64)], n_test=4)
    return root


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
