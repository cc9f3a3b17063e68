import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from noisydet.geom import Box  # noqa: E402

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        detail = dict(report.user_properties).get("detail", "")
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _acceptance:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}" + (f"  {detail}" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_boxes(rng, n, extent=100.0, max_size=40.0):
    x1 = rng.uniform(0, extent, n)
    y1 = rng.uniform(0, extent, n)
    w = rng.uniform(1.0, max_size, n)
    h = rng.uniform(1.0, max_size, n)
    return np.stack([x1, y1, x1 + w, y1 + h], axis=1)


def random_int_box(rng, grid=64):
    x1, x2 = sorted(rng.choice(grid + 1, size=2, replace=False))
    y1, y2 = sorted(rng.choice(grid + 1, size=2, replace=False))
    return Box(float(x1), float(y1), float(x2), float(y2))


def random_froc_instance(rng, max_images=5, max_dets=10, size=100.0):
    """Small random FROC problem as plain tuples; at least one lesion."""
    n_images = int(rng.integers(1, max_images + 1))
    images = [f"im{k}" for k in range(n_images)]
    lesions = []
    for img in images:
        for _ in range(int(rng.integers(0, 3))):
            x, y = rng.uniform(0, size - 30, 2)
            w, h = rng.uniform(5, 30, 2)
            lesions.append((img, (x, y, x + w, y + h)))
    if not lesions:
        lesions.append((images[0], (10.0, 10.0, 40.0, 40.0)))
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        img = images[int(rng.integers(n_images))]
        x, y = rng.uniform(0, size - 20, 2)
        w, h = rng.uniform(2, 20, 2)
        # coarse scores so that ties occur
        dets.append((img, (x, y, x + w, y + h), float(rng.integers(0, 6)) / 5))
    return dets, lesions, images
