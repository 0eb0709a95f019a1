import json
from pathlib import Path

import pytest

from dept.fgpem import extract_extreme_points
from dept.raster import write_image, write_mask
from dept.synthetic import disk_corpus


def make_corpus(root: Path, samples, with_gt=True) -> Path:
    """Lay out images/, points/, gt/ and a session config; return the config path."""
    for i, s in enumerate(samples):
        name = f"img{i:02d}"
        write_image(s.image, root / "images" / f"{name}.png")
        (root / "points").mkdir(parents=True, exist_ok=True)
        (root / "points" / f"{name}.json").write_text(json.dumps(extract_extreme_points(s.mask).to_json()))
        if with_gt:
            write_mask(s.mask, root / "gt" / f"{name}.png")
    cfg = {
        "images_dir": "images",
        "points_dir": "points",
        "features_dir": "features",
        "labels_dir": "labels",
        "total_epochs": 150,
        "interval": 50,
        "scale": 0.5,
    }
    if with_gt:
        cfg["gt_dir"] = "gt"
    path = root / "session.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


@pytest.fixture
def small_corpus(tmp_path):
    return make_corpus(tmp_path, disk_corpus(n=3, size=64, seed=4))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
