"""Background pixel statistics: per-channel first and second raw moments
of a background image corpus, plus channel histograms.

The moments feed the closed-form alpha-blending reconstruction error, so
they carry an explicit value-domain tag; mixing unit-domain moments into
signed-domain losses is a hard error, never a silent conversion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import InputError
from .rgba import RgbImage

DOMAIN_UNIT = "unit"
DOMAIN_SIGNED = "signed"

# Signed-domain channel moments of a large natural-image corpus, stored
# exactly as published (4 decimals, no attempt to un-round).
_DEFAULT_MEAN = (-0.0357, -0.0811, -0.1797)
_DEFAULT_SECOND_RAW = (0.3163, 0.3060, 0.3634)


def _check_domain(domain: str) -> str:
    if domain not in (DOMAIN_UNIT, DOMAIN_SIGNED):
        raise InputError("domain must be 'unit' or 'signed', got %r" % (domain,))
    return domain


@dataclass(frozen=True, eq=False)
class BackgroundMoments:
    """Per-channel E[b] and E[b^2] with their value domain and sample count."""

    domain: str
    mean: np.ndarray
    second_raw: np.ndarray
    sample_count: int

    def __eq__(self, other):
        if not isinstance(other, BackgroundMoments):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.sample_count == other.sample_count
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.second_raw, other.second_raw)
        )

    def __hash__(self):
        return hash((self.domain, self.sample_count, self.mean.tobytes(),
                     self.second_raw.tobytes()))

    def __post_init__(self):
        _check_domain(self.domain)
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        second = np.ascontiguousarray(self.second_raw, dtype=np.float64)
        if mean.shape != (3,) or second.shape != (3,):
            raise InputError("moments must hold 3 channels")
        lo = 0.0 if self.domain == DOMAIN_UNIT else -1.0
        if np.any(mean < lo) or np.any(mean > 1.0):
            raise InputError("mean out of %s-domain range: %s" % (self.domain, mean))
        if np.any(second < 0.0) or np.any(second > 1.0):
            raise InputError("second_raw out of range [0, 1]: %s" % (second,))
        if np.any(second - mean**2 < -1e-12):
            raise InputError(
                "second_raw < mean^2 violates variance nonnegativity: %s vs %s"
                % (second, mean**2)
            )
        if self.sample_count < 0:
            raise InputError("sample_count must be >= 0")
        mean.setflags(write=False)
        second.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_raw", second)

    def variance(self) -> np.ndarray:
        return np.maximum(self.second_raw - self.mean**2, 0.0)

    def std(self) -> np.ndarray:
        return np.sqrt(self.variance())

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "mean": [float(v) for v in self.mean],
            "second_raw": [float(v) for v in self.second_raw],
            "sample_count": int(self.sample_count),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackgroundMoments":
        try:
            return cls(
                domain=data["domain"],
                mean=np.asarray(data["mean"], dtype=np.float64),
                second_raw=np.asarray(data["second_raw"], dtype=np.float64),
                sample_count=int(data["sample_count"]),
            )
        except KeyError as exc:
            raise InputError("moments json missing key %s" % exc) from exc


def default_moments() -> BackgroundMoments:
    """Built-in signed-domain moments of the reference background corpus.

    The sample count is 0 because the built-ins carry no per-pixel count,
    only the published channel statistics.
    """
    return BackgroundMoments(
        domain=DOMAIN_SIGNED,
        mean=np.array(_DEFAULT_MEAN),
        second_raw=np.array(_DEFAULT_SECOND_RAW),
        sample_count=0,
    )


def save_moments(m: BackgroundMoments, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_dict(), fh, indent=2)
        fh.write("\n")


def load_moments(path: str) -> BackgroundMoments:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("cannot read moments file %r: %s" % (str(path), exc)) from exc
    return BackgroundMoments.from_dict(data)


class MomentAccumulator:
    """Streaming per-channel sums of b and b^2 with compensated addition.

    Each image contributes a partial sum computed by numpy's pairwise
    summation; partials are folded into the running totals with
    Kahan-style compensation so corpora of billions of pixels do not
    drift. Accumulators can be merged, and merging partials in corpus
    index order reproduces sequential accumulation.
    """

    def __init__(self, domain: str = DOMAIN_SIGNED):
        self.domain = _check_domain(domain)
        self._sum_b = np.zeros(3)
        self._sum_b2 = np.zeros(3)
        self._comp_b = np.zeros(3)
        self._comp_b2 = np.zeros(3)
        self.count = 0

    def _fold(self, partial_b: np.ndarray, partial_b2: np.ndarray, n: int) -> None:
        y = partial_b - self._comp_b
        t = self._sum_b + y
        self._comp_b = (t - self._sum_b) - y
        self._sum_b = t
        y = partial_b2 - self._comp_b2
        t = self._sum_b2 + y
        self._comp_b2 = (t - self._sum_b2) - y
        self._sum_b2 = t
        self.count += n

    def add_image(self, img: RgbImage) -> None:
        values = img.rgb
        if self.domain == DOMAIN_SIGNED:
            values = 2.0 * values - 1.0
        partial_b = values.sum(axis=(1, 2))
        partial_b2 = (values * values).sum(axis=(1, 2))
        self._fold(partial_b, partial_b2, values.shape[1] * values.shape[2])

    def merge(self, other: "MomentAccumulator") -> None:
        if other.domain != self.domain:
            raise InputError(
                "cannot merge %s-domain partial into %s-domain accumulator"
                % (other.domain, self.domain)
            )
        self._fold(other._sum_b, other._sum_b2, other.count)

    def finalize(self) -> BackgroundMoments:
        if self.count == 0:
            raise InputError("no pixels accumulated")
        return BackgroundMoments(
            domain=self.domain,
            mean=self._sum_b / self.count,
            second_raw=self._sum_b2 / self.count,
            sample_count=self.count,
        )


def estimate_moments(corpus: Iterable[RgbImage], domain: str = DOMAIN_SIGNED) -> BackgroundMoments:
    """Estimate per-channel E[b], E[b^2] over every pixel of a corpus.

    The domain conversion (unit to signed) happens before accumulation,
    so the returned moments are directly usable in that domain.
    """
    acc = MomentAccumulator(domain)
    for img in corpus:
        acc.add_image(img)
    if acc.count == 0:
        raise InputError("moment estimation needs at least one image")
    return acc.finalize()


@dataclass(frozen=True)
class ChannelHistogram:
    """Per-channel pixel value counts over equal-width bins of [0, 1]."""

    bins: int
    counts: np.ndarray
    domain: str = DOMAIN_UNIT

    def __post_init__(self):
        _check_domain(self.domain)
        if self.bins < 2:
            raise InputError("histogram needs at least 2 bins")
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (3, self.bins):
            raise InputError(
                "counts shape %s does not match (3, %d)" % (counts.shape, self.bins)
            )
        totals = counts.sum(axis=1)
        if not np.all(totals == totals[0]):
            raise InputError("per-channel totals differ: %s" % (totals,))
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def total(self) -> int:
        return int(self.counts[0].sum())

    def to_csv(self) -> str:
        lines = ["channel,bin,count"]
        for c, channel in enumerate(("r", "g", "b")):
            for i in range(self.bins):
                lines.append("%s,%d,%d" % (channel, i, self.counts[c, i]))
        return "\n".join(lines) + "\n"


def histogram(corpus: Iterable[RgbImage], bins: int = 256) -> ChannelHistogram:
    """Count quantized pixel values per channel.

    Bin i covers [i/bins, (i+1)/bins); the last bin is closed so 1.0
    lands in bin bins-1.
    """
    if bins < 2:
        raise InputError("histogram needs at least 2 bins")
    counts = np.zeros((3, bins), dtype=np.int64)
    seen = 0
    for img in corpus:
        idx = np.floor(img.rgb * bins).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        for c in range(3):
            counts[c] += np.bincount(idx[c].ravel(), minlength=bins)
        seen += 1
    if seen == 0:
        raise InputError("histogram needs at least one image")
    return ChannelHistogram(bins=bins, counts=counts)


def iter_corpus(paths: Iterable[str]) -> Iterator[RgbImage]:
    """Load a sequence of image files as RGB images, alpha dropped."""
    from .rgba import load_image

    for path in paths:
        yield RgbImage(load_image(path).rgb)
