"""Training-objective numerics: the closed-form alpha-blending
reconstruction error and its Monte-Carlo oracle, the two-background
perceptual protocol, KL divergence terms, reference-latent input
construction, GAN log-loss, the adaptive GAN weight, and composite
objective assembly.

The closed form evaluates, per pixel and channel,

    P^2 - 2 * dalpha * E[b] * P + dalpha^2 * E[b^2]

averaged over all pixels and the 3 channels, where P is the
premultiplied color difference and dalpha the alpha difference. This
equals the expected squared blended difference for any per-pixel i.i.d.
background distribution with those first two raw moments, which is what
the Monte-Carlo estimator checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import _mckernels
from .backstats import DOMAIN_SIGNED, DOMAIN_UNIT, BackgroundMoments
from .errors import InputError
from .prng import seed_state
from .rgba import (
    CANONICAL_BACKGROUNDS,
    Background,
    RgbImage,
    RgbaImage,
    SignedImage,
    blend,
    premultiplied_diff,
)

_LOGIT_CLAMP = 1e-7


@dataclass(frozen=True)
class LatentGaussian:
    """Diagonal Gaussian over a latent tensor: mu and log-variance maps."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        log_var = np.ascontiguousarray(self.log_var, dtype=np.float64)
        if mu.shape != log_var.shape:
            raise InputError(
                "mu shape %s does not match log_var shape %s"
                % (mu.shape, log_var.shape)
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_var))):
            raise InputError("latent parameters contain non-finite values")
        mu.setflags(write=False)
        log_var.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_var", log_var)

    @property
    def size(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class LossWeights:
    """Objective term weights, GAN warm-up step, and the adaptive-weight
    stabilizer."""

    w_rec: float = 1.0
    w_perc: float = 0.5
    w_norm_kl: float = 1e-6
    w_ref_kl: float = 1e-16
    w_gan: float = 1.0
    gan_start_step: int = 4000
    epsilon_adapt: float = 1e-4

    def __post_init__(self):
        for name in ("w_rec", "w_perc", "w_norm_kl", "w_ref_kl", "w_gan",
                     "epsilon_adapt"):
            if getattr(self, name) < 0:
                raise InputError("%s must be >= 0" % name)
        if self.gan_start_step < 0:
            raise InputError("gan_start_step must be >= 0")

    def to_dict(self) -> dict:
        return {
            "w_rec": self.w_rec,
            "w_perc": self.w_perc,
            "w_norm_kl": self.w_norm_kl,
            "w_ref_kl": self.w_ref_kl,
            "w_gan": self.w_gan,
            "gan_start_step": self.gan_start_step,
            "epsilon_adapt": self.epsilon_adapt,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LossWeights":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise InputError("unknown loss weight keys: %s" % sorted(unknown))
        return cls(**known)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Raw term values, the adaptive weight, the weighted total, and
    whether the GAN term was active at the evaluated step."""

    rec: float
    perc: float
    norm_kl: float
    ref_kl: float
    gan: float
    lambda_adapt: float
    total: float
    gan_active: bool


class BackgroundSampler:
    """Per-pixel i.i.d. background distribution with known channel moments.

    Subclasses fill ``mean`` and ``std`` (3-vectors) and implement
    ``sample``. Distributions expressible as a uniform 1- or 2-bit code
    per value additionally set ``bits`` and implement ``code_values``,
    which unlocks the fast jitted Monte-Carlo path.
    """

    bits: Optional[int] = None

    def __init__(self, mean, std):
        mean = np.ascontiguousarray(mean, dtype=np.float64)
        std = np.ascontiguousarray(std, dtype=np.float64)
        if mean.shape != (3,) or std.shape != (3,):
            raise InputError("sampler moments must be 3-vectors")
        if np.any(std < 0):
            raise InputError("sampler std must be nonnegative")
        mean.setflags(write=False)
        std.setflags(write=False)
        self.mean = mean
        self.std = std

    @property
    def second_raw(self) -> np.ndarray:
        return self.std**2 + self.mean**2

    @classmethod
    def from_moments(cls, m: BackgroundMoments) -> "BackgroundSampler":
        return cls(m.mean, m.std())

    def sample(self, rng: np.random.Generator, count: int, h: int, w: int) -> np.ndarray:
        """Draw (count, 3, h, w) background values."""
        raise NotImplementedError

    def code_values(self) -> np.ndarray:
        """(3, 2**bits) value table indexed by uniform codes; dyadic only."""
        raise NotImplementedError


class GaussianSampler(BackgroundSampler):
    """Independent per-channel normal backgrounds."""

    def sample(self, rng, count, h, w):
        draws = rng.standard_normal((count, 3, h, w))
        return draws * self.std[None, :, None, None] + self.mean[None, :, None, None]


class UniformSampler(BackgroundSampler):
    """Uniform on mean +- sqrt(3)*std per channel (matches both moments)."""

    def sample(self, rng, count, h, w):
        half = math.sqrt(3.0) * self.std
        lo = self.mean - half
        out = rng.random((count, 3, h, w))
        return out * (2.0 * half)[None, :, None, None] + lo[None, :, None, None]


class ConstantSampler(BackgroundSampler):
    """Degenerate distribution: always the same per-channel value."""

    def __init__(self, value):
        super().__init__(value, np.zeros(3))

    @classmethod
    def from_moments(cls, m: BackgroundMoments) -> "ConstantSampler":
        return cls(m.mean)

    def sample(self, rng, count, h, w):
        return np.broadcast_to(
            self.mean[None, :, None, None], (count, 3, h, w)
        ).copy()


class TwoPointSymmetricSampler(BackgroundSampler):
    """mean - std and mean + std, each with probability 1/2. Zero skew."""

    bits = 1

    def code_values(self):
        return np.stack([self.mean - self.std, self.mean + self.std], axis=1)

    def sample(self, rng, count, h, w):
        codes = rng.integers(0, 2, size=(count, 3, h, w))
        values = self.code_values()
        return values[np.arange(3)[None, :, None, None], codes]


class TwoPointAsymmetricSampler(BackgroundSampler):
    """mean - std/sqrt(3) with probability 3/4, mean + std*sqrt(3) with
    probability 1/4. Matches mean and variance, skewness 2/sqrt(3)."""

    bits = 2

    def code_values(self):
        lo = self.mean - self.std / math.sqrt(3.0)
        hi = self.mean + self.std * math.sqrt(3.0)
        return np.stack([lo, lo, lo, hi], axis=1)

    def sample(self, rng, count, h, w):
        codes = rng.integers(0, 4, size=(count, 3, h, w))
        values = self.code_values()
        return values[np.arange(3)[None, :, None, None], codes]


class ThreePointSampler(BackgroundSampler):
    """mean with probability 1/2, mean +- std*sqrt(2) with probability 1/4
    each. Matches mean and variance, zero skew."""

    bits = 2

    def code_values(self):
        outer = math.sqrt(2.0) * self.std
        return np.stack(
            [self.mean - outer, self.mean, self.mean, self.mean + outer], axis=1
        )

    def sample(self, rng, count, h, w):
        codes = rng.integers(0, 4, size=(count, 3, h, w))
        values = self.code_values()
        return values[np.arange(3)[None, :, None, None], codes]


def _image_domain(x) -> str:
    if isinstance(x, SignedImage):
        return DOMAIN_SIGNED
    if isinstance(x, RgbaImage):
        return DOMAIN_UNIT
    raise InputError("expected an RGBA-layout image, got %s" % type(x).__name__)


def abmse_closed(x, xhat, m: BackgroundMoments) -> float:
    """Expected blended MSE over the background distribution, in closed form.

    Works in either value domain; the moments' domain tag must match the
    images' domain. Symmetric in (x, xhat): swapping negates both P and
    dalpha, which leaves every term unchanged.
    """
    domain = _image_domain(x)
    if _image_domain(xhat) != domain:
        raise InputError("x and xhat live in different value domains")
    if m.domain != domain:
        raise InputError(
            "moments are %s-domain but images are %s-domain" % (m.domain, domain)
        )
    p, dalpha = premultiplied_diff(x, xhat)
    n = p.size
    sq = float(np.sum(p * p))
    cross = -2.0 * float(np.sum(m.mean * np.sum(p * dalpha, axis=(1, 2))))
    da_sq = float(np.sum(dalpha * dalpha)) * float(np.sum(m.second_raw))
    return (sq + cross + da_sq) / n


def _mc_deterministic(p, dalpha, sampler) -> Tuple[float, float]:
    d = p - sampler.mean[:, None, None] * dalpha
    return float(np.mean(d * d)), 0.0


def _mc_fast(p, dalpha, sampler, n_samples, seed) -> Tuple[float, float]:
    values = sampler.code_values()
    hw = dalpha.size
    n = p.size
    # per (channel, pixel, code): squared blended difference / element count
    flat_p = p.reshape(3, hw)
    flat_da = dalpha.reshape(hw)
    terms = (flat_p[:, :, None] - values[:, None, :] * flat_da[None, :, None]) ** 2 / n
    tables = _mckernels.build_chunk_tables(terms.reshape(3 * hw, -1), sampler.bits)
    state = np.uint64(seed_state(seed))
    total, total_sq = _mckernels.mc_sum_chunks(tables, n_samples, state)
    return _finish_mc(total, total_sq, n_samples)


def _mc_generic(p, dalpha, sampler, n_samples, seed) -> Tuple[float, float]:
    rng = np.random.default_rng(seed)
    h, w = dalpha.shape
    batch = max(1, int(4_000_000 / max(p.size, 1)))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        k = min(batch, n_samples - done)
        b = sampler.sample(rng, k, h, w)
        np.multiply(b, dalpha[None, None, :, :], out=b)
        np.subtract(p[None, :, :, :], b, out=b)
        np.square(b, out=b)
        means = b.mean(axis=(1, 2, 3))
        total += float(means.sum())
        total_sq += float((means * means).sum())
        done += k
    return _finish_mc(total, total_sq, n_samples)


def _finish_mc(total: float, total_sq: float, n: int) -> Tuple[float, float]:
    estimate = total / n
    if n < 2:
        return estimate, 0.0
    var_means = max((total_sq - n * estimate * estimate) / (n - 1), 0.0)
    return estimate, math.sqrt(var_means / n)


def abmse_mc(
    x,
    xhat,
    sampler: BackgroundSampler,
    n_samples: int,
    seed: int = 0,
) -> Tuple[float, float]:
    """Monte-Carlo estimate of the expected blended MSE.

    Each sample draws one background value per pixel and channel from
    ``sampler`` and evaluates the mean squared blended difference, which
    algebraically equals mean((P - b*dalpha)^2). Returns the mean of the
    per-sample means and its standard error (sample-variance based, 0
    when fewer than 2 samples). Calls with the same arguments and seed
    are bit-identical; zero-variance samplers are evaluated analytically
    with stderr 0.
    """
    if n_samples < 1:
        raise InputError("n_samples must be >= 1, got %d" % n_samples)
    if _image_domain(x) != _image_domain(xhat):
        raise InputError("x and xhat live in different value domains")
    p, dalpha = premultiplied_diff(x, xhat)
    if np.all(sampler.std == 0.0):
        return _mc_deterministic(p, dalpha, sampler)
    if sampler.bits in (1, 2):
        return _mc_fast(p, dalpha, sampler, n_samples, seed)
    return _mc_generic(p, dalpha, sampler, n_samples, seed)


def perceptual_protocol(
    x: RgbaImage,
    xhat: RgbaImage,
    scorer: Callable[[RgbImage, RgbImage], float],
) -> float:
    """Average a pairwise RGB scorer over black and white composites."""
    black = CANONICAL_BACKGROUNDS.by_name("black")
    white = CANONICAL_BACKGROUNDS.by_name("white")
    return 0.5 * (
        scorer(blend(xhat, black), blend(x, black))
        + scorer(blend(xhat, white), blend(x, white))
    )


def _check_reduction(reduction: str) -> None:
    if reduction not in ("sum", "mean"):
        raise InputError("reduction must be 'sum' or 'mean', got %r" % (reduction,))


def kl_standard(q: LatentGaussian, reduction: str = "sum") -> float:
    """KL divergence from a diagonal Gaussian to the standard normal."""
    _check_reduction(reduction)
    total = 0.5 * float(
        np.sum(q.mu * q.mu + np.exp(q.log_var) - q.log_var - 1.0)
    )
    return total / q.size if reduction == "mean" else total


def kl_between(q1: LatentGaussian, q2: LatentGaussian, reduction: str = "sum") -> float:
    """KL divergence between two diagonal Gaussians, KL(q1 || q2)."""
    _check_reduction(reduction)
    if q1.mu.shape != q2.mu.shape:
        raise InputError(
            "latent shapes differ: %s vs %s" % (q1.mu.shape, q2.mu.shape)
        )
    dmu = q1.mu - q2.mu
    total = 0.5 * float(
        np.sum(
            q2.log_var
            - q1.log_var
            + np.exp(q1.log_var - q2.log_var)
            + dmu * dmu * np.exp(-q2.log_var)
            - 1.0
        )
    )
    return total / q1.size if reduction == "mean" else total


def ref_kl_input(x: RgbaImage, b: Background) -> RgbaImage:
    """Composite over a background and attach an all-ones alpha plane.

    This is the pseudo-RGBA image fed to the reference encoder when
    regularizing the latent distribution.
    """
    blended = blend(x, b)
    return RgbaImage(blended.rgb, np.ones((x.height, x.width)))


def gan_loss(d_real, d_fake) -> float:
    """Non-saturating discriminator log-loss, averaged over patches.

    Inputs are probabilities; they are clamped to [1e-7, 1 - 1e-7]
    before the logs so the result is always finite.
    """
    real = np.clip(np.asarray(d_real, dtype=np.float64), _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
    fake = np.clip(np.asarray(d_fake, dtype=np.float64), _LOGIT_CLAMP, 1.0 - _LOGIT_CLAMP)
    try:
        values = np.log(real) + np.log1p(-fake)
    except ValueError as exc:
        raise InputError("d_real and d_fake shapes are incompatible") from exc
    return float(np.mean(values))


def adaptive_weight(
    grad_norm_rec: float,
    grad_norm_gan: float,
    epsilon: float = 1e-4,
    clamp: Optional[float] = None,
) -> float:
    """Ratio of reconstruction to GAN gradient norms at the decoder's
    last layer, stabilized by epsilon. Unclamped unless ``clamp`` gives
    an upper bound."""
    if grad_norm_rec < 0 or grad_norm_gan < 0:
        raise InputError("gradient norms must be nonnegative")
    value = grad_norm_rec / (grad_norm_gan + epsilon)
    if clamp is not None:
        value = min(value, clamp)
    return value


def compose_objective(
    rec: float,
    perc: float,
    norm_kl: float,
    ref_kl: float,
    gan: float,
    lambda_adapt: float,
    weights: Optional[LossWeights] = None,
    step: int = 0,
) -> ObjectiveBreakdown:
    """Assemble the weighted training objective at a given step.

    The GAN term enters from ``gan_start_step`` onward (inclusive),
    scaled by both its weight and the adaptive weight.
    """
    if step < 0:
        raise InputError("step must be >= 0, got %d" % step)
    w = weights if weights is not None else LossWeights()
    gan_active = step >= w.gan_start_step
    total = (
        w.w_rec * rec
        + w.w_perc * perc
        + w.w_norm_kl * norm_kl
        + w.w_ref_kl * ref_kl
    )
    if gan_active:
        total += w.w_gan * lambda_adapt * gan
    return ObjectiveBreakdown(
        rec=rec,
        perc=perc,
        norm_kl=norm_kl,
        ref_kl=ref_kl,
        gan=gan,
        lambda_adapt=lambda_adapt,
        total=total,
        gan_active=gan_active,
    )
