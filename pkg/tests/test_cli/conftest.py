"""CLI test configuration."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pytest

from ernet.core.geometry import write_transform
from ernet.data.volume import write_volume

if TYPE_CHECKING:
    from pathlib import Path

    from ernet.data.dataset import ImagePair


@pytest.fixture(autouse=True)
def _disable_rich_forced_colors(monkeypatch: pytest.MonkeyPatch) -> None:
    """Prevent Rich from forcing ANSI color in CI environments.

    GitHub Actions sets GITHUB_ACTIONS=true, which Rich interprets as
    force_terminal=True.  This injects ANSI escape codes into Typer's
    help output even inside CliRunner (where color is off by default),
    breaking substring assertions like ``"--stages" in result.output``.
    """
    monkeypatch.delenv("GITHUB_ACTIONS", raising=False)


@pytest.fixture
def tiny_dataset(tmp_path: Path, tiny_pairs: list[ImagePair]) -> Path:
    """The shared tiny pairs written as RVOL files with a manifest."""
    root = tmp_path / "data"
    records: list[dict[str, str]] = []
    for pair in tiny_pairs:
        stem = pair.pair_id
        write_volume(pair.source, root / f"{stem}.rvol")
        write_volume(pair.target, root / f"{stem}_target.rvol")
        record = {"id": stem, "source": f"{stem}.rvol", "target": f"{stem}_target.rvol"}
        for key, volume in (
            ("mask", pair.mask),
            ("labels", pair.labels),
            ("target_labels", pair.target_labels),
        ):
            assert volume is not None
            write_volume(volume, root / f"{stem}_{key}.rvol")
            record[key] = f"{stem}_{key}.rvol"
        assert pair.truth_transform is not None
        write_transform(root / f"{stem}_transform.txt", pair.truth_transform, pair.frame)
        record["transform"] = f"{stem}_transform.txt"
        records.append(record)
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps(records))
    return manifest


@pytest.fixture
def tiny_config(tmp_path: Path) -> Path:
    """One stage of each module, a 3-voxel NCC window and no augmentation."""
    path = tmp_path / "config.yaml"
    path.write_text(
        "model:\n"
        "  stages: [1, 1]\n"
        "  ncc_window: 3\n"
        "train:\n"
        "  iterations: 2\n"
        "  learning_rate: 0.001\n"
        "  augmentation: none\n"
        "  validate_every: 1\n"
        "  checkpoint_every: 0\n"
        "  log_every: 1\n"
    )
    return path
