"""Transparency-aware RGBA image evaluation and loss numerics."""

from .backstats import (
    DOMAIN_SIGNED,
    DOMAIN_UNIT,
    BackgroundMoments,
    ChannelHistogram,
    MomentAccumulator,
    default_moments,
    estimate_moments,
    histogram,
    iter_corpus,
    load_moments,
    save_moments,
)
from .afs import read_afs1, write_afs1
from .dataset import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    CorpusStats,
    DatasetManifest,
    ManifestEntry,
    augment_background,
    augment_entry,
    ingest_pair,
    load_manifest,
    load_matte,
    save_manifest,
    split,
    split_manifest,
    stats,
    stats_csv,
)
from .errors import InputError, NumericalError, PluginError, RgbaBenchError
from .losses import (
    BackgroundSampler,
    ConstantSampler,
    GaussianSampler,
    LatentGaussian,
    LossWeights,
    ObjectiveBreakdown,
    ThreePointSampler,
    TwoPointAsymmetricSampler,
    TwoPointSymmetricSampler,
    UniformSampler,
    abmse_closed,
    abmse_mc,
    adaptive_weight,
    compose_objective,
    gan_loss,
    kl_between,
    kl_standard,
    perceptual_protocol,
    ref_kl_input,
)
from .metrics import (
    DESCRIPTORS,
    FeatureSet,
    GaussianStats,
    M4Result,
    MetricDescriptor,
    PluginConfig,
    aggregate_overall,
    extend_metric,
    frechet_distance,
    gaussian_stats,
    mse,
    plugin_score,
    psnr,
    run_plugin,
    ssim,
)
from .prng import Xorshift64Star, derive_seed
from .rgba import (
    CANONICAL_BACKGROUNDS,
    Background,
    CanonicalBackgroundSet,
    RgbImage,
    RgbaImage,
    SignedImage,
    blend,
    blend_signed,
    load_image,
    premultiplied_diff,
    save_image,
    save_rgb,
    to_signed,
    to_unit,
)
from .report import (
    Comparison,
    ComparisonRow,
    MetricReport,
    compare,
    emit,
    parse_report,
    run_eval,
)
from .surgery import (
    ConvTensor,
    TensorContainer,
    conv2d_reference,
    extend_decoder_last_conv,
    extend_encoder_first_conv,
    read_atc1,
    write_atc1,
)

__version__ = "0.1.0"

__all__ = [
    "DOMAIN_SIGNED",
    "DOMAIN_UNIT",
    "BackgroundMoments",
    "ChannelHistogram",
    "MomentAccumulator",
    "default_moments",
    "estimate_moments",
    "histogram",
    "iter_corpus",
    "load_moments",
    "save_moments",
    "read_afs1",
    "write_afs1",
    "SPLIT_TEST",
    "SPLIT_TRAIN",
    "CorpusStats",
    "DatasetManifest",
    "ManifestEntry",
    "augment_background",
    "augment_entry",
    "ingest_pair",
    "load_manifest",
    "load_matte",
    "save_manifest",
    "split",
    "split_manifest",
    "stats",
    "stats_csv",
    "Xorshift64Star",
    "derive_seed",
    "InputError",
    "NumericalError",
    "PluginError",
    "RgbaBenchError",
    "BackgroundSampler",
    "ConstantSampler",
    "GaussianSampler",
    "LatentGaussian",
    "LossWeights",
    "ObjectiveBreakdown",
    "ThreePointSampler",
    "TwoPointAsymmetricSampler",
    "TwoPointSymmetricSampler",
    "UniformSampler",
    "abmse_closed",
    "abmse_mc",
    "adaptive_weight",
    "compose_objective",
    "gan_loss",
    "kl_between",
    "kl_standard",
    "perceptual_protocol",
    "ref_kl_input",
    "DESCRIPTORS",
    "FeatureSet",
    "GaussianStats",
    "M4Result",
    "MetricDescriptor",
    "PluginConfig",
    "aggregate_overall",
    "extend_metric",
    "frechet_distance",
    "gaussian_stats",
    "mse",
    "plugin_score",
    "psnr",
    "run_plugin",
    "ssim",
    "CANONICAL_BACKGROUNDS",
    "Background",
    "CanonicalBackgroundSet",
    "RgbImage",
    "RgbaImage",
    "SignedImage",
    "blend",
    "blend_signed",
    "load_image",
    "premultiplied_diff",
    "save_image",
    "save_rgb",
    "to_signed",
    "to_unit",
    "Comparison",
    "ComparisonRow",
    "MetricReport",
    "compare",
    "emit",
    "parse_report",
    "run_eval",
    "ConvTensor",
    "TensorContainer",
    "conv2d_reference",
    "extend_decoder_last_conv",
    "extend_encoder_first_conv",
    "read_atc1",
    "write_atc1",
    "__version__",
]
