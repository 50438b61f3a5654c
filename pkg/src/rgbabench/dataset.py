"""Matting-corpus tooling: turn (foreground, alpha matte) pairs into
RGBA images, produce deterministic train/test splits, compute corpus
statistics, and apply background augmentation.

Splits use the package PRNG (see prng.py) over entries sorted by id, so
the same seed yields the same assignment on every platform. The test
block is the first floor(test_fraction * n) entries of the permutation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Sequence

import cv2
import numpy as np

from .errors import InputError
from .prng import Xorshift64Star, derive_seed
from .rgba import Background, RgbImage, RgbaImage, blend

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"


@dataclass(frozen=True)
class ManifestEntry:
    """One corpus image: id, file location, dimensions, split assignment."""

    id: str
    rgba_path: str
    width: int
    height: int
    split: str = SPLIT_TRAIN

    def __post_init__(self):
        if not self.id:
            raise InputError("entry id must be nonempty")
        if self.width <= 0 or self.height <= 0:
            raise InputError(
                "entry %r has nonpositive dimensions %dx%d"
                % (self.id, self.width, self.height)
            )
        if self.split not in (SPLIT_TRAIN, SPLIT_TEST):
            raise InputError("entry %r has unknown split %r" % (self.id, self.split))


@dataclass(frozen=True)
class DatasetManifest:
    """A named corpus: entries plus the split parameters that produced it."""

    dataset_name: str
    entries: tuple
    seed: int = 0
    test_fraction: float = 0.0

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InputError("duplicate entry ids: %s" % dupes)
        if not 0.0 <= self.test_fraction < 1.0:
            raise InputError(
                "test_fraction must be in [0, 1), got %g" % self.test_fraction
            )
        object.__setattr__(self, "entries", entries)

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "entries": [
                {
                    "id": e.id,
                    "rgba_path": e.rgba_path,
                    "width": e.width,
                    "height": e.height,
                    "split": e.split,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        try:
            entries = tuple(
                ManifestEntry(
                    id=e["id"],
                    rgba_path=e["rgba_path"],
                    width=int(e["width"]),
                    height=int(e["height"]),
                    split=e.get("split", SPLIT_TRAIN),
                )
                for e in data["entries"]
            )
            return cls(
                dataset_name=data["dataset_name"],
                entries=entries,
                seed=int(data.get("seed", 0)),
                test_fraction=float(data.get("test_fraction", 0.0)),
            )
        except KeyError as exc:
            raise InputError("manifest json missing key %s" % exc) from exc


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_manifest(path: str) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("cannot read manifest %r: %s" % (str(path), exc)) from exc
    return DatasetManifest.from_dict(data)


@dataclass(frozen=True)
class CorpusStats:
    """Split counts and mean dimensions of a corpus."""

    n_train: int
    n_test: int
    mean_height: float
    mean_width: float
    resolution_product: float = field(default=0.0)

    def __post_init__(self):
        expected = self.mean_height * self.mean_width
        if self.resolution_product == 0.0:
            object.__setattr__(self, "resolution_product", expected)
        elif abs(self.resolution_product - expected) > 1e-6 * max(expected, 1.0):
            raise InputError(
                "resolution_product %g does not equal mean_height * mean_width %g"
                % (self.resolution_product, expected)
            )


def ingest_pair(fg: RgbImage, matte: np.ndarray) -> RgbaImage:
    """Combine an RGB foreground with its alpha matte into one RGBA image.

    No premultiplication happens: the rgb planes are kept as-is even
    where the matte is zero.
    """
    matte = np.asarray(matte, dtype=np.float64)
    if matte.ndim != 2:
        raise InputError(
            "matte must be single-channel, got %d channels"
            % (matte.shape[-1] if matte.ndim == 3 else matte.ndim)
        )
    if matte.shape != (fg.height, fg.width):
        raise InputError(
            "matte %s does not match foreground %dx%d"
            % (matte.shape, fg.height, fg.width)
        )
    return RgbaImage(fg.rgb, matte)


def load_matte(path: str) -> np.ndarray:
    """Decode an 8- or 16-bit single-channel matte image to [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputError("cannot read matte file %r" % str(path))
    if raw.ndim != 2:
        raise InputError("matte %r must be single-channel" % str(path))
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    raise InputError("unsupported matte bit depth %s in %r" % (raw.dtype, str(path)))


def split(
    entries: Sequence[ManifestEntry],
    test_fraction: float = 0.05,
    seed: int = 0,
) -> Dict[str, str]:
    """Assign each entry id to "train" or "test".

    Entry ids are sorted, permuted by a seeded Fisher-Yates shuffle, and
    the first floor(test_fraction * n) ids of the permutation become the
    test split. The floor matters: it reproduces published per-dataset
    test counts that rounding would get wrong.
    """
    if not 0.0 <= test_fraction < 1.0:
        raise InputError("test_fraction must be in [0, 1), got %g" % test_fraction)
    ids = sorted(e.id for e in entries)
    if len(set(ids)) != len(ids):
        raise InputError("entries contain duplicate ids")
    rng = Xorshift64Star(seed)
    rng.shuffle(ids)
    n_test = math.floor(test_fraction * len(ids))
    assignment = {eid: SPLIT_TEST for eid in ids[:n_test]}
    for eid in ids[n_test:]:
        assignment[eid] = SPLIT_TRAIN
    return assignment


def split_manifest(
    manifest: DatasetManifest,
    test_fraction: float = 0.05,
    seed: int = 0,
) -> DatasetManifest:
    """Return a copy of the manifest with fresh split assignments and the
    split parameters recorded."""
    assignment = split(manifest.entries, test_fraction, seed)
    entries = tuple(
        replace(e, split=assignment[e.id]) for e in manifest.entries
    )
    return DatasetManifest(
        dataset_name=manifest.dataset_name,
        entries=entries,
        seed=seed,
        test_fraction=test_fraction,
    )


def augment_background(
    x: RgbaImage,
    probability: float = 0.3,
    rng: Xorshift64Star = None,
) -> RgbaImage:
    """With the given probability, composite the image over a random
    solid color and return it as an opaque RGBA image; otherwise return
    the input unchanged.

    Draw order is fixed: one uniform for the gate, then three uniforms
    for the color channels, so a given stream always produces the same
    augmentation.
    """
    if not 0.0 <= probability <= 1.0:
        raise InputError("probability must be in [0, 1], got %g" % probability)
    if rng is None:
        raise InputError("augment_background needs an explicit rng")
    if probability == 0.0:
        return x
    if rng.next_float() >= probability:
        return x
    color = Background.solid(rng.next_float(), rng.next_float(), rng.next_float())
    composited = blend(x, color)
    return RgbaImage(composited.rgb, np.ones((x.height, x.width)))


def augment_entry(
    x: RgbaImage,
    entry_id: str,
    global_seed: int,
    probability: float = 0.3,
) -> RgbaImage:
    """Augment one entry under its own derived stream, so processing
    order and parallelism cannot change results."""
    rng = Xorshift64Star(derive_seed(global_seed, entry_id))
    return augment_background(x, probability, rng)


def stats(manifest: DatasetManifest) -> CorpusStats:
    """Split counts plus mean height/width over all entries."""
    if not manifest.entries:
        raise InputError("manifest %r has no entries" % manifest.dataset_name)
    n_train = sum(1 for e in manifest.entries if e.split == SPLIT_TRAIN)
    n_test = sum(1 for e in manifest.entries if e.split == SPLIT_TEST)
    mean_h = float(np.mean([e.height for e in manifest.entries]))
    mean_w = float(np.mean([e.width for e in manifest.entries]))
    return CorpusStats(
        n_train=n_train,
        n_test=n_test,
        mean_height=mean_h,
        mean_width=mean_w,
    )


def stats_csv(manifests: Iterable[DatasetManifest]) -> str:
    """One row per dataset plus a totals row, in the shape of a corpus
    statistics table."""
    lines = ["dataset,total,train,test,mean_width,mean_height,resolution"]
    total_train = 0
    total_test = 0
    rows: List[str] = []
    for manifest in manifests:
        s = stats(manifest)
        total_train += s.n_train
        total_test += s.n_test
        rows.append(
            "%s,%d,%d,%d,%.1f,%.1f,%.1f"
            % (
                manifest.dataset_name,
                s.n_train + s.n_test,
                s.n_train,
                s.n_test,
                s.mean_width,
                s.mean_height,
                s.resolution_product,
            )
        )
    lines.extend(rows)
    lines.append(
        "Total,%d,%d,%d,,,"
        % (total_train + total_test, total_train, total_test)
    )
    return "\n".join(lines) + "\n"
