"""Public API for ernet.data."""

from __future__ import annotations

from ernet.data.augment import (
    PRESETS,
    AugmentationRanges,
    augment_pair,
    preset,
    random_affine,
)
from ernet.data.dataset import (
    DatasetError,
    ImagePair,
    load_manifest,
    pairs_from_phantoms,
    scan_atlas_directory,
    write_phantom_dataset,
)
from ernet.data.formats import FormatRegistry, VolumeFormat, default_registry
from ernet.data.phantom import PhantomSample, make_phantom
from ernet.data.volume import (
    BadMagicError,
    HeaderError,
    TruncatedVolumeError,
    UnsupportedDatatypeError,
    Volume,
    VolumeFormatError,
    normalize_minmax,
    read_volume,
    write_volume,
)

__all__ = [
    "PRESETS",
    "AugmentationRanges",
    "BadMagicError",
    "DatasetError",
    "FormatRegistry",
    "HeaderError",
    "ImagePair",
    "PhantomSample",
    "TruncatedVolumeError",
    "UnsupportedDatatypeError",
    "Volume",
    "VolumeFormat",
    "VolumeFormatError",
    "augment_pair",
    "default_registry",
    "load_manifest",
    "make_phantom",
    "normalize_minmax",
    "pairs_from_phantoms",
    "preset",
    "random_affine",
    "read_volume",
    "scan_atlas_directory",
    "write_phantom_dataset",
    "write_volume",
]
