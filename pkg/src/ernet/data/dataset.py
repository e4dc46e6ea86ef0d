"""Image pairs, dataset manifests and atlas-directory discovery.

A manifest is a JSON list of pair records with paths relative to the manifest::

    [{"id": "p0", "source": "p0.rvol", "target": "../target.rvol",
      "mask": "p0_mask.rvol", "labels": "p0_labels.rvol",
      "target_labels": "../target_labels.rvol", "transform": "p0_transform.txt"}]

Only ``source`` and ``target`` are required.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from fnmatch import fnmatch
from pathlib import Path
from typing import TYPE_CHECKING, Any

from pathspec import GitIgnoreSpec

from ernet.core.geometry import CoordinateFrame, Convention, read_transform, write_transform
from ernet.data.formats import default_registry
from ernet.data.phantom import make_phantom
from ernet.data.volume import Volume, read_volume, write_volume

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from ernet.core.geometry import AffineTransform
    from ernet.data.augment import AugmentationRanges

logger = logging.getLogger(__name__)

IGNORE_FILENAME = ".ernetignore"
MASK_SUFFIX = "_mask"
LABELS_SUFFIX = "_labels"
TRANSFORM_SUFFIX = "_transform.txt"
DEFAULT_SPLITS: dict[str, int] = {"train": 40, "val": 5, "test": 10}
MANIFEST_KEYS = frozenset(
    {"id", "source", "target", "mask", "labels", "target_labels", "transform"}
)


class DatasetError(ValueError):
    """Raised for malformed manifests or unusable dataset directories."""


@dataclass(frozen=True, eq=False)
class ImagePair:
    """A source/target pair with optional ground truth for evaluation."""

    pair_id: str
    source: Volume
    target: Volume
    mask: Volume | None = None
    labels: Volume | None = None
    target_labels: Volume | None = None
    truth_transform: AffineTransform | None = None

    @property
    def frame(self) -> CoordinateFrame:
        return CoordinateFrame(self.source.extents)

    @property
    def has_truth(self) -> bool:
        """Whether both Dice scores can be computed for this pair."""
        return self.mask is not None and self.labels is not None and self.target_labels is not None


def _resolve(base: Path, value: Any, key: str) -> Path:
    if not isinstance(value, str) or not value:
        msg = f"Manifest field '{key}' must be a non-empty path string"
        raise DatasetError(msg)
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_manifest(path: Path) -> list[ImagePair]:
    """Load every pair listed in a manifest.

    Raises:
        DatasetError: If the manifest is not a list of records with source and target.
    """
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        msg = f"Manifest {path} is not valid JSON: {exc}"
        raise DatasetError(msg) from exc
    if not isinstance(records, list):
        msg = f"Manifest {path} must contain a JSON list of pairs"
        raise DatasetError(msg)

    base = path.parent
    pairs: list[ImagePair] = []
    for i, record in enumerate(records):
        if not isinstance(record, dict) or "source" not in record or "target" not in record:
            msg = f"Manifest {path} entry {i} needs 'source' and 'target'"
            raise DatasetError(msg)
        unknown = set(record) - MANIFEST_KEYS
        if unknown:
            msg = f"Manifest {path} entry {i}: unknown key '{sorted(unknown)[0]}'"
            raise DatasetError(msg)
        source = read_volume(_resolve(base, record["source"], "source"))

        transform = None
        if "transform" in record:
            transform = read_transform(
                _resolve(base, record["transform"], "transform"), CoordinateFrame(source.extents)
            )
        pairs.append(
            ImagePair(
                pair_id=str(record.get("id", Path(record["source"]).stem)),
                source=source,
                target=read_volume(_resolve(base, record["target"], "target")),
                mask=_optional_volume(base, record, "mask"),
                labels=_optional_volume(base, record, "labels"),
                target_labels=_optional_volume(base, record, "target_labels"),
                truth_transform=transform,
            )
        )
    return pairs


def _optional_volume(base: Path, record: dict[str, Any], key: str) -> Volume | None:
    return read_volume(_resolve(base, record[key], key)) if key in record else None


def _is_ignored(spec: GitIgnoreSpec | None, relative_path: str) -> bool:
    return spec is not None and spec.match_file(relative_path)


def scan_atlas_directory(
    directory: Path,
    target: Path,
    *,
    include: Sequence[str] = (),
    exclude: Sequence[str] = (),
) -> list[ImagePair]:
    """Pair every volume under *directory* with one shared *target*.

    Hidden files and paths matched by a top-level ``.ernetignore`` are
    skipped, then *include* and *exclude* globs apply to the relative path.
    ``<stem>_mask`` and ``<stem>_labels`` companions are attached as truth,
    as is ``<target stem>_labels`` next to the target.

    Raises:
        NotADirectoryError: If *directory* is not a directory.
    """
    if not directory.is_dir():
        msg = f"Not a directory: {directory}"
        raise NotADirectoryError(msg)
    registry = default_registry()
    ignore_path = directory / IGNORE_FILENAME
    spec = (
        GitIgnoreSpec.from_lines(ignore_path.read_text(encoding="utf-8").splitlines())
        if ignore_path.is_file()
        else None
    )

    candidates: list[str] = []
    for dirpath, dirnames, filenames in os.walk(directory):
        rel_dir = Path(dirpath).relative_to(directory).as_posix()
        prefix = "" if rel_dir == "." else f"{rel_dir}/"
        dirnames[:] = sorted(
            d for d in dirnames if not d.startswith(".") and not _is_ignored(spec, f"{prefix}{d}/")
        )
        for name in filenames:
            rel = f"{prefix}{name}"
            if name.startswith(".") or _is_ignored(spec, rel):
                continue
            if registry.get_for_path(name) is None:
                continue
            if include and not any(fnmatch(rel, p) for p in include):
                continue
            if any(fnmatch(rel, p) for p in exclude):
                continue
            candidates.append(rel)
    candidates.sort()

    target_path = target.resolve()
    target_volume = read_volume(target)
    target_labels_path = target.with_name(f"{target.stem}{LABELS_SUFFIX}{target.suffix}")
    target_labels = read_volume(target_labels_path) if target_labels_path.is_file() else None

    pairs: list[ImagePair] = []
    for rel in candidates:
        path = directory / rel
        stem = path.stem
        if path.resolve() in (target_path, target_labels_path.resolve()):
            continue
        if stem.endswith((MASK_SUFFIX, LABELS_SUFFIX)):
            continue
        mask_path = path.with_name(f"{stem}{MASK_SUFFIX}{path.suffix}")
        labels_path = path.with_name(f"{stem}{LABELS_SUFFIX}{path.suffix}")
        transform_path = path.with_name(f"{stem}{TRANSFORM_SUFFIX}")
        source = read_volume(path)
        pairs.append(
            ImagePair(
                pair_id=stem,
                source=source,
                target=target_volume,
                mask=read_volume(mask_path) if mask_path.is_file() else None,
                labels=read_volume(labels_path) if labels_path.is_file() else None,
                target_labels=target_labels,
                truth_transform=(
                    read_transform(transform_path, CoordinateFrame(source.extents))
                    if transform_path.is_file()
                    else None
                ),
            )
        )
    logger.info("Found %d source volume(s) in %s", len(pairs), directory)
    return pairs


def write_phantom_dataset(
    root: Path,
    seed: int,
    *,
    counts: Mapping[str, int] | None = None,
    extents: tuple[int, int, int] = (32, 32, 32),
    ranges: AugmentationRanges | None = None,
    fmt: str = "rvol",
) -> dict[str, Path]:
    """Write phantom splits sharing one target, with a manifest per split.

    Phantom seeds run consecutively from *seed* across the splits in order.

    Returns:
        Manifest path per split name.
    """
    counts = dict(DEFAULT_SPLITS if counts is None else counts)
    ext = default_registry().extension_for(fmt)
    root.mkdir(parents=True, exist_ok=True)

    next_seed = seed
    target_written = False
    manifests: dict[str, Path] = {}
    for split, count in counts.items():
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        records: list[dict[str, str]] = []
        for _ in range(count):
            sample = make_phantom(next_seed, extents, ranges)
            if not target_written:
                write_volume(sample.target, root / f"target{ext}")
                write_volume(sample.target_labels, root / f"target{LABELS_SUFFIX}{ext}")
                target_written = True
            stem = f"phantom_{next_seed:05d}"
            write_volume(sample.source, split_dir / f"{stem}{ext}")
            write_volume(sample.truth_mask, split_dir / f"{stem}{MASK_SUFFIX}{ext}")
            write_volume(sample.truth_labels, split_dir / f"{stem}{LABELS_SUFFIX}{ext}")
            write_transform(
                split_dir / f"{stem}{TRANSFORM_SUFFIX}",
                sample.truth_transform,
                CoordinateFrame(sample.source.extents),
                Convention.normalized,
            )
            records.append(
                {
                    "id": stem,
                    "source": f"{stem}{ext}",
                    "target": f"../target{ext}",
                    "mask": f"{stem}{MASK_SUFFIX}{ext}",
                    "labels": f"{stem}{LABELS_SUFFIX}{ext}",
                    "target_labels": f"../target{LABELS_SUFFIX}{ext}",
                    "transform": f"{stem}{TRANSFORM_SUFFIX}",
                }
            )
            next_seed += 1
        manifest = split_dir / "manifest.json"
        manifest.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
        manifests[split] = manifest
        logger.info("Wrote %d phantom(s) to %s", count, split_dir)
    return manifests


def pairs_from_phantoms(
    seeds: Sequence[int],
    extents: tuple[int, int, int] = (32, 32, 32),
    ranges: AugmentationRanges | None = None,
) -> list[ImagePair]:
    """In-memory pairs for *seeds*, without touching the filesystem."""
    pairs: list[ImagePair] = []
    for seed in seeds:
        sample = make_phantom(seed, extents, ranges)
        pairs.append(
            ImagePair(
                pair_id=f"phantom_{seed:05d}",
                source=sample.source,
                target=sample.target,
                mask=sample.truth_mask,
                labels=sample.truth_labels,
                target_labels=sample.target_labels,
                truth_transform=sample.truth_transform,
            )
        )
    return pairs
