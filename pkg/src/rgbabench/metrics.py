"""RGB base metrics (MSE, PSNR, SSIM), the background-averaged metric
extension for RGBA pairs, Frechet distance over feature sets, and the
subprocess protocol for external pairwise scorers.

A pairwise RGB metric m is lifted to RGBA by compositing both images
over each of the nine canonical backgrounds and averaging:

    M(x, xhat) = mean_b [ mean_pairs m(blend(x, b), blend(xhat, b)) ]

Set-level metrics (FID) are lifted the same way, one value per
background over the full blended sets, then averaged.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.ndimage import correlate1d

from .errors import InputError, NumericalError, PluginError
from .rgba import (
    CANONICAL_BACKGROUNDS,
    CanonicalBackgroundSet,
    RgbImage,
    RgbaImage,
    blend,
    save_rgb,
)

HIGHER_BETTER = "higher-better"
LOWER_BETTER = "lower-better"

MSE_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricDescriptor:
    """Name, comparison direction, and granularity of a metric."""

    name: str
    direction: str
    kind: str  # "pairwise" or "set-level"

    def __post_init__(self):
        if self.direction not in (HIGHER_BETTER, LOWER_BETTER):
            raise InputError("unknown direction %r" % (self.direction,))
        if self.kind not in ("pairwise", "set-level"):
            raise InputError("unknown metric kind %r" % (self.kind,))


DESCRIPTORS: Dict[str, MetricDescriptor] = {
    "mse": MetricDescriptor("mse", LOWER_BETTER, "pairwise"),
    "psnr": MetricDescriptor("psnr", HIGHER_BETTER, "pairwise"),
    "ssim": MetricDescriptor("ssim", HIGHER_BETTER, "pairwise"),
    "fid": MetricDescriptor("fid", LOWER_BETTER, "set-level"),
}


def _check_pair(a: RgbImage, b: RgbImage) -> None:
    if a.rgb.shape != b.rgb.shape:
        raise InputError(
            "dimension mismatch: %s vs %s" % (a.rgb.shape, b.rgb.shape)
        )


def mse(a: RgbImage, b: RgbImage) -> float:
    """Mean squared difference over all pixels and channels."""
    _check_pair(a, b)
    return float(np.mean((a.rgb - b.rgb) ** 2))


def psnr(a: RgbImage, b: RgbImage, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB.

    The MSE is floored at 1e-12, capping identical unit-domain images
    at 120 dB so aggregates stay finite.
    """
    if peak <= 0:
        raise InputError("peak must be positive, got %g" % peak)
    err = max(mse(a, b), MSE_FLOOR)
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    offsets = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    k = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_mean(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable filtering; the border mode is irrelevant because only
    # fully valid window positions are kept afterwards
    out = correlate1d(plane, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    r = kernel.size // 2
    return out[r:-r, r:-r]


def ssim(
    a: RgbImage,
    b: RgbImage,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """Structural similarity with a Gaussian window, per channel, averaged.

    Only fully valid window positions enter the mean (no padding
    contribution). The covariance uses the same filtered-moment code
    path as the variances, so ssim(x, x) is exactly 1.0.
    """
    _check_pair(a, b)
    if window < 2:
        raise InputError("window must be at least 2, got %d" % window)
    if a.height < window or a.width < window:
        raise InputError(
            "image %dx%d smaller than the %d-pixel window"
            % (a.height, a.width, window)
        )
    kernel = _gaussian_kernel(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    channel_means = []
    for c in range(3):
        x = a.rgb[c]
        y = b.rgb[c]
        mu_x = _window_mean(x, kernel)
        mu_y = _window_mean(y, kernel)
        var_x = _window_mean(x * x, kernel) - mu_x * mu_x
        var_y = _window_mean(y * y, kernel) - mu_y * mu_y
        cov = _window_mean(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        channel_means.append(np.mean(num / den))
    return float(np.mean(channel_means))


@dataclass(frozen=True)
class M4Result:
    """A metric lifted over the canonical backgrounds: 9 labeled values
    plus their arithmetic mean."""

    metric: str
    per_background: Dict[str, float]
    overall: float

    def __post_init__(self):
        if len(self.per_background) != 9:
            raise InputError(
                "expected 9 background values, got %d" % len(self.per_background)
            )
        mean = float(np.mean(list(self.per_background.values())))
        if abs(mean - self.overall) > 1e-9:
            raise InputError(
                "overall %r is not the mean of the background values %r"
                % (self.overall, mean)
            )

    def values_in_order(self, names: Sequence[str]) -> Tuple[float, ...]:
        return tuple(self.per_background[n] for n in names)


def aggregate_overall(per_background: Sequence[float]) -> float:
    """Arithmetic mean of the nine per-background scores."""
    values = list(per_background)
    if len(values) != 9:
        raise InputError("expected exactly 9 values, got %d" % len(values))
    return float(np.mean(values))


def extend_metric(
    metric: Callable[[RgbImage, RgbImage], float],
    gt: Sequence[RgbaImage],
    pred: Sequence[RgbaImage],
    backgrounds: CanonicalBackgroundSet = CANONICAL_BACKGROUNDS,
    name: str = "",
) -> M4Result:
    """Average a pairwise RGB metric over blends onto each background.

    ``gt`` and ``pred`` are aligned sequences; for every background the
    per-pair scores are averaged, and the overall value is the mean of
    the per-background averages.
    """
    if len(gt) != len(pred):
        raise InputError(
            "gt and pred lengths differ: %d vs %d" % (len(gt), len(pred))
        )
    if len(gt) == 0:
        raise InputError("metric extension needs at least one image pair")
    per_background = {}
    for bg in backgrounds:
        scores = [
            metric(blend(x, bg), blend(xhat, bg)) for x, xhat in zip(gt, pred)
        ]
        per_background[bg.name] = float(np.mean(scores))
    overall = aggregate_overall(list(per_background.values()))
    return M4Result(metric=name or getattr(metric, "__name__", "metric"),
                    per_background=per_background, overall=overall)


@dataclass(frozen=True)
class FeatureSet:
    """Rows of feature vectors, one per image, as produced by an extractor."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise InputError("feature rows must be 2-D, got shape %s" % (rows.shape,))
        if not np.all(np.isfinite(rows)):
            raise InputError("feature rows contain non-finite values")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector and symmetric covariance of a feature distribution."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.shape != (mu.size, mu.size):
            raise InputError(
                "shape mismatch: mu %s vs sigma %s" % (mu.shape, sigma.shape)
            )
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise InputError("Gaussian stats contain non-finite values")
        if np.max(np.abs(sigma - sigma.T)) > 1e-8:
            raise InputError("sigma is not symmetric within 1e-8")
        if np.min(np.diag(sigma)) < -1e-10:
            raise InputError("sigma has a negative diagonal entry")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.mu.size


def gaussian_stats(f: FeatureSet) -> GaussianStats:
    """Column means and unbiased sample covariance of a feature set."""
    if f.n < 2:
        raise InputError("Gaussian statistics need at least 2 rows, got %d" % f.n)
    rows = f.rows.astype(np.float64)
    mu = rows.mean(axis=0)
    centered = rows - mu
    sigma = centered.T @ centered / (f.n - 1)
    sigma = (sigma + sigma.T) / 2.0
    return GaussianStats(mu=mu, sigma=sigma)


def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    vals, vecs = scipy.linalg.eigh(sigma)
    top = float(vals.max(initial=0.0))
    floor = -1e-6 * max(top, 1.0)
    if vals.min(initial=0.0) < floor:
        raise NumericalError(
            "covariance has a strongly negative eigenvalue %g" % vals.min()
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _sqrt_trace_newton_schulz(a: np.ndarray, iterations: int = 40) -> float:
    # fallback square-root trace if the eigendecomposition does not
    # converge; coupled Newton-Schulz iteration on the normalized matrix
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return 0.0
    y = a / norm
    z = np.eye(a.shape[0])
    eye3 = 3.0 * np.eye(a.shape[0])
    for _ in range(iterations):
        t = 0.5 * (eye3 - z @ y)
        y = y @ t
        z = t @ z
    return float(np.trace(y) * math.sqrt(norm))


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> float:
    """Frechet distance between two Gaussians.

    ||mu1 - mu2||^2 + tr(sigma1 + sigma2 - 2*sqrt(sigma1*sigma2)). The
    symmetrized product sqrt(sigma1)*sigma2*sqrt(sigma1) equals A*A^T for
    A = sqrt(sigma1)*sqrt(sigma2), so its sqrt-trace is the sum of the
    singular values of A; singular values stay O(eps)-accurate near zero
    where eigenvalues of the product would square the rounding error, which
    matters for the rank-deficient covariances of small feature sets.
    Tiny negative eigenvalues from rounding (>= -1e-6 of the largest) are
    clamped to zero, and a result in [-1e-6, 0) is reported as 0.
    """
    if s1.d != s2.d:
        raise InputError("dimension mismatch: %d vs %d" % (s1.d, s2.d))
    diff = s1.mu - s2.mu
    mean_term = float(diff @ diff)
    try:
        product = _psd_sqrt(s1.sigma) @ _psd_sqrt(s2.sigma)
        trace_sqrt = float(np.sum(scipy.linalg.svdvals(product)))
    except np.linalg.LinAlgError:
        trace_sqrt = _sqrt_trace_newton_schulz(s1.sigma @ s2.sigma)
    value = mean_term + float(np.trace(s1.sigma) + np.trace(s2.sigma)) - 2.0 * trace_sqrt
    if value < -1e-6:
        raise NumericalError("Frechet distance came out negative: %g" % value)
    return max(value, 0.0)


@dataclass(frozen=True)
class PluginConfig:
    """How to invoke an external pairwise scorer process."""

    name: str
    command: Tuple[str, ...]
    direction: str = LOWER_BETTER
    timeout: float = 300.0
    reentrant: bool = False

    def __post_init__(self):
        if self.direction not in (HIGHER_BETTER, LOWER_BETTER):
            raise InputError("unknown direction %r" % (self.direction,))
        if not self.command:
            raise InputError("plugin command must not be empty")
        object.__setattr__(self, "command", tuple(self.command))

    def descriptor(self) -> MetricDescriptor:
        return MetricDescriptor(self.name, self.direction, "pairwise")


def _normalize_command(command) -> Tuple[str, ...]:
    if isinstance(command, str):
        parts = tuple(shlex.split(command))
    else:
        parts = tuple(str(c) for c in command)
    if not parts:
        raise InputError("plugin command must not be empty")
    return parts


def run_plugin(
    command,
    pairs: Sequence[Tuple[str, str]],
    timeout: float = 300.0,
) -> list:
    """Score a batch of image-file pairs through an external process.

    The child receives one extra argument, the path of a manifest file
    whose lines are "<index> <gt_path> <pred_path>", and must print one
    "<index> <score>" line per pair. Missing or malformed lines, nonzero
    exit, and timeouts all raise PluginError with the child's stderr
    attached.
    """
    argv = _normalize_command(command)
    if not pairs:
        raise InputError("plugin invocation needs at least one pair")
    with tempfile.TemporaryDirectory(prefix="rgbabench-plugin-") as tmp:
        manifest = os.path.join(tmp, "pairs.txt")
        with open(manifest, "w", encoding="utf-8") as fh:
            for i, (gt_path, pred_path) in enumerate(pairs):
                fh.write("%d %s %s\n" % (i, gt_path, pred_path))
        try:
            proc = subprocess.run(
                list(argv) + [manifest],
                capture_output=True,
                text=True,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise PluginError(
                "plugin %r timed out after %g s" % (argv[0], timeout),
                stderr=(exc.stderr or ""),
            ) from exc
        except OSError as exc:
            raise PluginError("cannot launch plugin %r: %s" % (argv[0], exc)) from exc
    if proc.returncode != 0:
        raise PluginError(
            "plugin %r exited with code %d" % (argv[0], proc.returncode),
            stderr=proc.stderr,
        )
    scores: Dict[int, float] = {}
    for line in proc.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        try:
            idx = int(fields[0])
            value = float(fields[1])
        except (IndexError, ValueError) as exc:
            raise PluginError(
                "unparsable plugin output line %r" % line, stderr=proc.stderr
            ) from exc
        scores[idx] = value
    missing = [i for i in range(len(pairs)) if i not in scores]
    if missing:
        raise PluginError(
            "plugin output missing scores for indices %s" % missing,
            stderr=proc.stderr,
        )
    return [scores[i] for i in range(len(pairs))]


def plugin_score(
    command,
    blended_gt: RgbImage,
    blended_pred: RgbImage,
    timeout: float = 300.0,
) -> float:
    """Score one blended pair with an external process.

    The two images are written to temporary files and scored through the
    manifest protocol of ``run_plugin``.
    """
    with tempfile.TemporaryDirectory(prefix="rgbabench-pair-") as tmp:
        gt_path = os.path.join(tmp, "gt.png")
        pred_path = os.path.join(tmp, "pred.png")
        save_rgb(blended_gt, gt_path)
        save_rgb(blended_pred, pred_path)
        return run_plugin(command, [(gt_path, pred_path)], timeout=timeout)[0]
