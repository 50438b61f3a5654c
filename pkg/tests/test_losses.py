import numpy as np
import pytest
from numpy.testing import assert_allclose

from rgbabench import (
    DOMAIN_SIGNED,
    DOMAIN_UNIT,
    BackgroundMoments,
    ConstantSampler,
    GaussianSampler,
    InputError,
    LatentGaussian,
    LossWeights,
    SignedImage,
    ThreePointSampler,
    TwoPointAsymmetricSampler,
    TwoPointSymmetricSampler,
    UniformSampler,
    abmse_closed,
    abmse_mc,
    adaptive_weight,
    blend_signed,
    compose_objective,
    default_moments,
    gan_loss,
    kl_between,
    kl_standard,
    mse,
    perceptual_protocol,
    ref_kl_input,
)
from rgbabench.rgba import RgbaImage, RgbImage
from tests.conftest import random_rgba, random_signed

trapezoid = getattr(np, "trapezoid", None) or np.trapz


def enumerated_abmse(x, xhat, sampler):
    """Exact expectation by summing over the sampler's discrete support."""
    p = xhat.rgb * xhat.alpha - x.rgb * x.alpha
    dalpha = xhat.alpha - x.alpha
    values = sampler.code_values()
    total = 0.0
    for c in range(3):
        for v in values[c]:
            total += np.sum((p[c] - dalpha * v) ** 2) / values.shape[1]
    return total / p.size


def kl_by_integration(mu1, var1, mu2, var2):
    lo = min(mu1 - 12 * np.sqrt(var1), mu2 - 12 * np.sqrt(var2))
    hi = max(mu1 + 12 * np.sqrt(var1), mu2 + 12 * np.sqrt(var2))
    t = np.linspace(lo, hi, 100_000)
    q = np.exp(-((t - mu1) ** 2) / (2 * var1)) / np.sqrt(2 * np.pi * var1)
    logq = -((t - mu1) ** 2) / (2 * var1) - 0.5 * np.log(2 * np.pi * var1)
    logp = -((t - mu2) ** 2) / (2 * var2) - 0.5 * np.log(2 * np.pi * var2)
    return float(trapezoid(q * (logq - logp), t))


def moment_samplers():
    m = default_moments()
    return (
        TwoPointSymmetricSampler.from_moments(m),
        TwoPointAsymmetricSampler.from_moments(m),
        ThreePointSampler.from_moments(m),
    )


def test_sampler_moments_exact_by_enumeration():
    m = default_moments()
    for sampler in moment_samplers():
        values = sampler.code_values()
        assert_allclose(values.mean(axis=1), m.mean, atol=1e-12)
        assert_allclose((values**2).mean(axis=1), m.second_raw, atol=1e-12)


def test_sampler_bits():
    sym, asym, three = moment_samplers()
    assert sym.bits == 1
    assert asym.bits == 2
    assert three.bits == 2
    m = default_moments()
    assert GaussianSampler.from_moments(m).bits is None
    assert UniformSampler.from_moments(m).bits is None


def test_asymmetric_sampler_has_positive_skew():
    m = default_moments()
    s = TwoPointAsymmetricSampler.from_moments(m)
    values = s.code_values()
    std = np.asarray(m.std())
    centered = values - np.asarray(m.mean)[:, None]
    skew = (centered**3).mean(axis=1) / std**3
    assert_allclose(skew, np.full(3, 2 / np.sqrt(3)), atol=1e-10)
    sym = TwoPointSymmetricSampler.from_moments(m).code_values()
    sym_centered = sym - np.asarray(m.mean)[:, None]
    assert_allclose((sym_centered**3).mean(axis=1), np.zeros(3), atol=1e-12)


def test_sampler_sample_statistics(rng):
    m = default_moments()
    for sampler in moment_samplers():
        draws = sampler.sample(rng, 4000, 2, 2).reshape(-1, 3, 4)
        emp_mean = draws.mean(axis=(0, 2))
        n = draws.shape[0] * draws.shape[2]
        se = np.asarray(m.std()) / np.sqrt(n)
        assert np.all(np.abs(emp_mean - np.asarray(m.mean)) < 4 * se)


def test_sampler_shape_and_range(rng):
    m = BackgroundMoments(DOMAIN_UNIT, (0.5,) * 3, (0.3,) * 3, 10)
    s = UniformSampler.from_moments(m)
    draws = s.sample(rng, 5, 3, 4)
    assert draws.shape == (5, 3, 3, 4)
    lo = np.asarray(m.mean) - np.sqrt(3) * np.asarray(m.std())
    hi = np.asarray(m.mean) + np.sqrt(3) * np.asarray(m.std())
    assert np.all(draws >= lo[None, :, None, None] - 1e-12)
    assert np.all(draws <= hi[None, :, None, None] + 1e-12)


def test_abmse_closed_identical_is_zero(rng):
    x = random_signed(rng, 8, 8)
    assert abmse_closed(x, x, default_moments()) == 0.0


def test_abmse_closed_opaque_reduces_to_mse(rng):
    a = SignedImage(rng.uniform(-1, 1, (3, 6, 6)), np.ones((6, 6)))
    b = SignedImage(rng.uniform(-1, 1, (3, 6, 6)), np.ones((6, 6)))
    expected = float(np.mean((a.rgb - b.rgb) ** 2))
    assert_allclose(abmse_closed(a, b, default_moments()), expected, atol=1e-13)


def test_abmse_closed_matches_enumeration(rng):
    for sampler in moment_samplers():
        m = BackgroundMoments(
            DOMAIN_SIGNED, sampler.mean, sampler.second_raw, 0)
        for _ in range(5):
            x = random_signed(rng, 8, 8)
            xhat = random_signed(rng, 8, 8)
            assert_allclose(
                abmse_closed(x, xhat, m),
                enumerated_abmse(x, xhat, sampler),
                atol=1e-12,
            )


def test_abmse_closed_symmetric_under_swap(rng):
    m = default_moments()
    x = random_signed(rng, 8, 8)
    xhat = random_signed(rng, 8, 8)
    assert abmse_closed(x, xhat, m) == abmse_closed(xhat, x, m)


def test_abmse_closed_zero_mean_background_splits(rng):
    # with E[b] = 0 the cross term drops and the value is
    # mean(P^2) + E[b^2] * mean(dalpha^2) per channel
    m = BackgroundMoments(DOMAIN_SIGNED, (0.0,) * 3, (0.5, 0.3, 0.1), 0)
    x = random_signed(rng, 6, 6)
    xhat = random_signed(rng, 6, 6)
    p = xhat.rgb * xhat.alpha - x.rgb * x.alpha
    da = xhat.alpha - x.alpha
    expected = np.mean(p**2) + np.mean(
        np.asarray(m.second_raw)[:, None, None] * da[None] ** 2)
    assert_allclose(abmse_closed(x, xhat, m), expected, atol=1e-13)


def test_abmse_closed_rejects_domain_mismatch(rng):
    x = random_rgba(rng, 4, 4)
    with pytest.raises(InputError):
        abmse_closed(x, x, default_moments())


def test_abmse_mc_identical_is_zero(rng):
    x = random_signed(rng, 4, 4)
    sampler = GaussianSampler.from_moments(default_moments())
    est, stderr = abmse_mc(x, x, sampler, 100)
    assert est == 0.0
    assert stderr == 0.0


def test_abmse_mc_constant_sampler_is_exact(rng):
    x = random_signed(rng, 6, 6)
    xhat = random_signed(rng, 6, 6)
    color = (0.2, -0.3, 0.7)
    sampler = ConstantSampler(color)
    est, stderr = abmse_mc(x, xhat, sampler, 50)
    expected = mse(
        RgbImage(np.clip((blend_signed(x, color) + 1) / 2, 0, 1)),
        RgbImage(np.clip((blend_signed(xhat, color) + 1) / 2, 0, 1)),
    ) * 4.0  # unit-domain mse x4 = signed-domain mse
    assert_allclose(est, expected, atol=1e-12)
    assert stderr == 0.0


def test_abmse_mc_within_three_sigma_of_closed(rng):
    m = default_moments()
    x = random_signed(rng, 8, 8)
    xhat = random_signed(rng, 8, 8)
    closed = abmse_closed(x, xhat, m)
    for sampler in (
        TwoPointSymmetricSampler.from_moments(m),
        ThreePointSampler.from_moments(m),
        GaussianSampler.from_moments(m),
        UniformSampler.from_moments(m),
    ):
        est, stderr = abmse_mc(x, xhat, sampler, 200_000, seed=11)
        assert stderr > 0
        assert abs(est - closed) <= 3 * stderr


def test_abmse_mc_deterministic_per_seed(rng):
    m = default_moments()
    x = random_signed(rng, 6, 6)
    xhat = random_signed(rng, 6, 6)
    for sampler in (
        TwoPointSymmetricSampler.from_moments(m),
        GaussianSampler.from_moments(m),
    ):
        a = abmse_mc(x, xhat, sampler, 10_000, seed=3)
        b = abmse_mc(x, xhat, sampler, 10_000, seed=3)
        c = abmse_mc(x, xhat, sampler, 10_000, seed=4)
        assert a == b
        assert a != c


def test_abmse_mc_moment_sufficiency(rng):
    m = default_moments()
    x = random_signed(rng, 8, 8)
    xhat = random_signed(rng, 8, 8)
    asym = TwoPointAsymmetricSampler.from_moments(m)
    three = ThreePointSampler.from_moments(m)
    e1, s1 = abmse_mc(x, xhat, asym, 300_000, seed=5)
    e2, s2 = abmse_mc(x, xhat, three, 300_000, seed=6)
    assert abs(e1 - e2) <= 3 * np.hypot(s1, s2)


def test_abmse_mc_rejects_bad_sample_count(rng):
    x = random_signed(rng, 4, 4)
    s = GaussianSampler.from_moments(default_moments())
    with pytest.raises(InputError):
        abmse_mc(x, x, s, 0)


def test_latent_gaussian_validation():
    LatentGaussian(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(InputError):
        LatentGaussian(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(InputError):
        LatentGaussian(np.array([np.nan]), np.array([0.0]))


def test_kl_standard_examples():
    q = LatentGaussian(np.zeros(4), np.zeros(4))
    assert kl_standard(q) == 0.0
    q1 = LatentGaussian(np.array([1.0]), np.array([0.0]))
    assert_allclose(kl_standard(q1), 0.5, atol=1e-15)
    q2 = LatentGaussian(np.array([0.0]), np.array([np.log(4.0)]))
    assert_allclose(kl_standard(q2), 0.5 * (4 - np.log(4) - 1), atol=1e-12)
    assert_allclose(kl_standard(q2), kl_by_integration(0, 4, 0, 1), atol=1e-6)


def test_kl_standard_reduction_mean():
    q = LatentGaussian(np.ones(8), np.zeros(8))
    assert_allclose(kl_standard(q, reduction="mean"), 0.5, atol=1e-15)
    assert_allclose(kl_standard(q, reduction="sum"), 4.0, atol=1e-15)
    with pytest.raises(InputError):
        kl_standard(q, reduction="median")


def test_kl_standard_matches_integration(rng):
    for _ in range(10):
        mu = float(rng.normal())
        lv = float(rng.uniform(-2, 2))
        q = LatentGaussian(np.array([mu]), np.array([lv]))
        assert_allclose(
            kl_standard(q), kl_by_integration(mu, np.exp(lv), 0.0, 1.0),
            atol=1e-6)


def test_kl_between_self_is_exactly_zero(rng):
    q = LatentGaussian(rng.normal(size=6), rng.uniform(-1, 1, 6))
    assert kl_between(q, q) == 0.0


def test_kl_between_specializes_to_standard(rng):
    q1 = LatentGaussian(rng.normal(size=5), rng.uniform(-1, 1, 5))
    q2 = LatentGaussian(np.zeros(5), np.zeros(5))
    assert_allclose(kl_between(q1, q2), kl_standard(q1), atol=1e-12)


def test_kl_between_hand_example():
    q1 = LatentGaussian(np.array([1.0]), np.array([0.0]))
    q2 = LatentGaussian(np.array([0.0]), np.array([np.log(2.0)]))
    expected = 0.5 * (np.log(2) + (1 + 1) / 2 - 1)
    assert_allclose(kl_between(q1, q2), expected, atol=1e-12)
    assert_allclose(kl_between(q1, q2), 0.346574, atol=1e-6)
    assert_allclose(expected, kl_by_integration(1, 1, 0, 2), atol=1e-6)


def test_kl_between_matches_integration(rng):
    for _ in range(10):
        mu1, mu2 = rng.normal(size=2)
        lv1, lv2 = rng.uniform(-2, 2, 2)
        q1 = LatentGaussian(np.array([mu1]), np.array([lv1]))
        q2 = LatentGaussian(np.array([mu2]), np.array([lv2]))
        assert_allclose(
            kl_between(q1, q2),
            kl_by_integration(mu1, np.exp(lv1), mu2, np.exp(lv2)),
            atol=1e-6)


def test_ref_kl_input_black_background(rng):
    from rgbabench import CANONICAL_BACKGROUNDS

    x = random_rgba(rng, 5, 5)
    out = ref_kl_input(x, CANONICAL_BACKGROUNDS.by_name("black"))
    assert_allclose(out.rgb, x.rgb * x.alpha, atol=1e-15)
    assert np.all(out.alpha == 1.0)


def test_ref_kl_input_opaque_passthrough(rng):
    from rgbabench import Background

    x = RgbaImage(rng.random((3, 4, 4)), np.ones((4, 4)))
    out = ref_kl_input(x, Background.solid(0.3, 0.6, 0.9))
    assert_allclose(out.rgb, x.rgb, atol=1e-15)


def test_gan_loss_examples():
    n = np.full(4, 1 - 1e-7)
    f = np.full(4, 1e-7)
    assert abs(gan_loss(n, f)) < 3e-7
    half = np.full(3, 0.5)
    assert_allclose(gan_loss(half, half), 2 * np.log(0.5), atol=1e-12)
    assert_allclose(
        gan_loss(np.array([0.9]), np.array([0.1])), 2 * np.log(0.9),
        atol=1e-12)


def test_gan_loss_clips_extremes():
    val = gan_loss(np.array([0.0]), np.array([1.0]))
    assert np.isfinite(val)


def test_adaptive_weight_examples():
    assert adaptive_weight(0.0, 5.0) == 0.0
    assert adaptive_weight(0.0, 0.0) == 0.0
    assert_allclose(adaptive_weight(1.0, 1.0), 1 / 1.0001, atol=1e-12)
    assert adaptive_weight(1.0, 0.0) == 10_000.0
    assert adaptive_weight(1.0, 0.0, epsilon=1e-2) == 100.0


def test_adaptive_weight_clamp():
    assert adaptive_weight(1.0, 0.0, clamp=50.0) == 50.0
    assert_allclose(adaptive_weight(1.0, 1.0, clamp=50.0), 1 / 1.0001)
    with pytest.raises(InputError):
        adaptive_weight(-1.0, 1.0)


def test_loss_weights_defaults_and_round_trip():
    w = LossWeights()
    assert w.w_rec == 1.0
    assert w.w_perc == 0.5
    assert w.w_norm_kl == 1e-6
    assert w.w_ref_kl == 1e-16
    assert w.w_gan == 1.0
    assert w.gan_start_step == 4000
    assert w.epsilon_adapt == 1e-4
    assert LossWeights.from_dict(w.to_dict()) == w
    with pytest.raises(InputError):
        LossWeights(w_rec=-1.0)


def test_compose_objective_defaults_step_zero():
    b = compose_objective(1.0, 1.0, 1.0, 1.0, 1.0, lambda_adapt=1.0, step=0)
    assert_allclose(b.total, 1 + 0.5 + 1e-6 + 1e-16, atol=1e-18)
    assert not b.gan_active


def test_compose_objective_gan_boundary():
    before = compose_objective(
        1.0, 1.0, 1.0, 1.0, 1.0, lambda_adapt=1.0, step=3999)
    at = compose_objective(1.0, 1.0, 1.0, 1.0, 1.0, lambda_adapt=1.0, step=4000)
    assert not before.gan_active
    assert at.gan_active
    assert_allclose(at.total - before.total, 1.0, atol=1e-12)


def test_compose_objective_all_zero():
    b = compose_objective(0.0, 0.0, 0.0, 0.0, 0.0, lambda_adapt=0.0, step=9999)
    assert b.total == 0.0
    assert b.gan_active


def test_compose_objective_custom_weights():
    w = LossWeights(w_rec=2.0, w_perc=0.0, w_norm_kl=0.0, w_ref_kl=0.0,
                    w_gan=3.0, gan_start_step=0)
    b = compose_objective(1.5, 9.0, 9.0, 9.0, 2.0, lambda_adapt=0.5,
                          weights=w, step=0)
    assert_allclose(b.total, 2.0 * 1.5 + 3.0 * 0.5 * 2.0, atol=1e-12)
    assert b.lambda_adapt == 0.5


def test_compose_objective_breakdown_invariant(rng):
    for _ in range(5):
        rec, perc, nk, rk, gan = rng.random(5)
        lam = float(rng.random())
        step = int(rng.integers(0, 8000))
        b = compose_objective(rec, perc, nk, rk, gan, lambda_adapt=lam,
                              step=step)
        w = LossWeights()
        expected = (w.w_rec * rec + w.w_perc * perc + w.w_norm_kl * nk
                    + w.w_ref_kl * rk)
        if step >= w.gan_start_step:
            expected += w.w_gan * lam * gan
        assert abs(b.total - expected) <= 1e-12


def test_perceptual_protocol_identical_zero(rng):
    x = random_rgba(rng, 6, 6)
    assert perceptual_protocol(x, x, mse) == 0.0


def test_perceptual_protocol_transparent_zero(rng):
    a = RgbaImage(rng.random((3, 4, 4)), np.zeros((4, 4)))
    b = RgbaImage(rng.random((3, 4, 4)), np.zeros((4, 4)))
    assert perceptual_protocol(a, b, mse) == 0.0


def test_perceptual_protocol_hand_pixel():
    x = RgbaImage(np.ones((3, 2, 2)), np.ones((2, 2)))
    xhat = RgbaImage(np.ones((3, 2, 2)), np.zeros((2, 2)))
    assert_allclose(perceptual_protocol(x, xhat, mse), 0.5, atol=1e-15)


def test_perceptual_protocol_averages_black_and_white(rng):
    from rgbabench import CANONICAL_BACKGROUNDS, blend

    x = random_rgba(rng, 5, 5)
    xhat = random_rgba(rng, 5, 5)
    black = CANONICAL_BACKGROUNDS.by_name("black")
    white = CANONICAL_BACKGROUNDS.by_name("white")
    expected = 0.5 * (
        mse(blend(xhat, black), blend(x, black))
        + mse(blend(xhat, white), blend(x, white))
    )
    assert_allclose(perceptual_protocol(x, xhat, mse), expected, atol=1e-14)
