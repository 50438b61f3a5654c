"""RGBA image representation, alpha blending, the canonical background
set, value-domain conversions, and premultiplied difference terms.

Images are stored channel-major: rgb planes as a (3, H, W) float64 array
and alpha as (H, W). The unit domain [0, 1] is the canonical one for all
metric work; the signed domain [-1, 1] exists only for loss numerics,
with ``to_signed``/``to_unit`` as the single declared conversion boundary.
All types are immutable after construction and safe to share across
threads read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import cv2
import numpy as np

from .errors import InputError


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


def _check_range(name: str, arr: np.ndarray, lo: float, hi: float) -> None:
    if not np.all(np.isfinite(arr)):
        raise InputError("%s contains non-finite values" % name)
    amin, amax = float(arr.min()), float(arr.max())
    if amin < lo or amax > hi:
        raise InputError(
            "%s values out of range [%g, %g]: min %g, max %g"
            % (name, lo, hi, amin, amax)
        )


def _check_planes(rgb: np.ndarray, alpha: np.ndarray) -> None:
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise InputError("rgb must have shape (3, H, W), got %s" % (rgb.shape,))
    if alpha.shape != rgb.shape[1:]:
        raise InputError(
            "alpha shape %s does not match rgb planes %s"
            % (alpha.shape, rgb.shape[1:])
        )
    if rgb.shape[1] == 0 or rgb.shape[2] == 0:
        raise InputError("image dimensions must be nonzero, got %s" % (rgb.shape,))


@dataclass(frozen=True)
class RgbaImage:
    """Unit-domain RGBA image: rgb (3, H, W) and alpha (H, W), all in [0, 1]."""

    rgb: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        rgb = _readonly(self.rgb)
        alpha = _readonly(self.alpha)
        _check_planes(rgb, alpha)
        _check_range("rgb", rgb, 0.0, 1.0)
        _check_range("alpha", alpha, 0.0, 1.0)
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "alpha", alpha)

    @property
    def height(self) -> int:
        return self.rgb.shape[1]

    @property
    def width(self) -> int:
        return self.rgb.shape[2]


@dataclass(frozen=True)
class RgbImage:
    """Unit-domain RGB image: rgb (3, H, W) in [0, 1]."""

    rgb: np.ndarray

    def __post_init__(self):
        rgb = _readonly(self.rgb)
        if rgb.ndim != 3 or rgb.shape[0] != 3:
            raise InputError("rgb must have shape (3, H, W), got %s" % (rgb.shape,))
        if rgb.shape[1] == 0 or rgb.shape[2] == 0:
            raise InputError("image dimensions must be nonzero, got %s" % (rgb.shape,))
        _check_range("rgb", rgb, 0.0, 1.0)
        object.__setattr__(self, "rgb", rgb)

    @property
    def height(self) -> int:
        return self.rgb.shape[1]

    @property
    def width(self) -> int:
        return self.rgb.shape[2]


@dataclass(frozen=True)
class SignedImage:
    """RGBA layout with rgb rescaled to [-1, 1]; alpha stays in [0, 1]."""

    rgb: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        rgb = _readonly(self.rgb)
        alpha = _readonly(self.alpha)
        _check_planes(rgb, alpha)
        _check_range("rgb", rgb, -1.0, 1.0)
        _check_range("alpha", alpha, 0.0, 1.0)
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "alpha", alpha)

    @property
    def height(self) -> int:
        return self.rgb.shape[1]

    @property
    def width(self) -> int:
        return self.rgb.shape[2]


@dataclass(frozen=True)
class Background:
    """A blending background: either a solid color or a full RGB image."""

    color: Union[np.ndarray, None] = None
    image: Union[RgbImage, None] = None
    name: str = ""

    def __post_init__(self):
        if (self.color is None) == (self.image is None):
            raise InputError("background needs exactly one of color or image")
        if self.color is not None:
            color = _readonly(np.asarray(self.color, dtype=np.float64))
            if color.shape != (3,):
                raise InputError("solid color must have 3 channels, got %s" % (color.shape,))
            _check_range("background color", color, 0.0, 1.0)
            object.__setattr__(self, "color", color)

    @classmethod
    def solid(cls, r: float, g: float, b: float, name: str = "") -> "Background":
        return cls(color=np.array([r, g, b], dtype=np.float64), name=name)

    @classmethod
    def from_image(cls, image: RgbImage, name: str = "") -> "Background":
        return cls(image=image, name=name)

    @property
    def is_solid(self) -> bool:
        return self.color is not None


# Fixed order so report columns and CSV output are deterministic.
_CANONICAL_COLORS = (
    ("black", (0.0, 0.0, 0.0)),
    ("gray", (0.5, 0.5, 0.5)),
    ("white", (1.0, 1.0, 1.0)),
    ("red", (1.0, 0.0, 0.0)),
    ("green", (0.0, 1.0, 0.0)),
    ("blue", (0.0, 0.0, 1.0)),
    ("yellow", (1.0, 1.0, 0.0)),
    ("cyan", (0.0, 1.0, 1.0)),
    ("magenta", (1.0, 0.0, 1.0)),
)


@dataclass(frozen=True)
class CanonicalBackgroundSet:
    """The nine solid backgrounds with channels in {0, 0.5, 1}, fixed order."""

    backgrounds: tuple = field(
        default_factory=lambda: tuple(
            Background.solid(*rgb, name=name) for name, rgb in _CANONICAL_COLORS
        )
    )

    def __post_init__(self):
        if len(self.backgrounds) != 9:
            raise InputError(
                "canonical set must hold exactly 9 backgrounds, got %d"
                % len(self.backgrounds)
            )
        for bg in self.backgrounds:
            if not bg.is_solid:
                raise InputError("canonical backgrounds must be solid colors")
            if not np.all(np.isin(bg.color, (0.0, 0.5, 1.0))):
                raise InputError(
                    "canonical channel values must come from {0, 0.5, 1}, got %s"
                    % (bg.color,)
                )

    @property
    def names(self) -> tuple:
        return tuple(bg.name for bg in self.backgrounds)

    def __iter__(self):
        return iter(self.backgrounds)

    def __len__(self) -> int:
        return len(self.backgrounds)

    def __getitem__(self, i: int) -> Background:
        return self.backgrounds[i]

    def by_name(self, name: str) -> Background:
        for bg in self.backgrounds:
            if bg.name == name:
                return bg
        raise InputError("unknown canonical background %r" % name)


CANONICAL_BACKGROUNDS = CanonicalBackgroundSet()


def blend(x: RgbaImage, b: Background) -> RgbImage:
    """Composite an RGBA image over a background.

    Per pixel and channel the output is ``x_rgb * alpha + b * (1 - alpha)``,
    a convex combination that stays inside [0, 1].
    """
    if b.is_solid:
        bg = b.color[:, None, None]
    else:
        if (b.image.height, b.image.width) != (x.height, x.width):
            raise InputError(
                "background %dx%d does not match image %dx%d"
                % (b.image.height, b.image.width, x.height, x.width)
            )
        bg = b.image.rgb
    out = x.rgb * x.alpha + bg * (1.0 - x.alpha)
    # convex in exact arithmetic; clip the odd half-ulp of rounding spill
    np.clip(out, 0.0, 1.0, out=out)
    return RgbImage(out)


def blend_signed(x: SignedImage, b_signed: Sequence[float]) -> np.ndarray:
    """Alpha blending in the signed rgb domain over a per-channel constant
    background. Returns the blended (3, H, W) array with values in [-1, 1]."""
    bg = np.asarray(b_signed, dtype=np.float64)
    if bg.shape != (3,):
        raise InputError("signed background must have 3 channels, got %s" % (bg.shape,))
    _check_range("signed background", bg, -1.0, 1.0)
    out = x.rgb * x.alpha + bg[:, None, None] * (1.0 - x.alpha)
    np.clip(out, -1.0, 1.0, out=out)
    return out


def premultiplied_diff(x, xhat):
    """Premultiplied color and alpha differences between a reference image
    ``x`` and a reconstruction ``xhat``.

    Returns ``(P, dalpha)`` where ``P = xhat_rgb*xhat_alpha - x_rgb*x_alpha``
    (3, H, W) and ``dalpha = xhat_alpha - x_alpha`` (H, W). Both inputs must
    live in the same value domain; swapping the arguments negates both terms.
    """
    if type(x) is not type(xhat):
        raise InputError(
            "inputs live in different value domains: %s vs %s"
            % (type(x).__name__, type(xhat).__name__)
        )
    if not isinstance(x, (RgbaImage, SignedImage)):
        raise InputError("premultiplied_diff needs RGBA-layout images")
    if x.rgb.shape != xhat.rgb.shape:
        raise InputError(
            "dimension mismatch: %s vs %s" % (x.rgb.shape, xhat.rgb.shape)
        )
    p = xhat.rgb * xhat.alpha - x.rgb * x.alpha
    dalpha = xhat.alpha - x.alpha
    return p, dalpha


def to_signed(x: RgbaImage) -> SignedImage:
    """Rescale rgb from [0, 1] to [-1, 1]; alpha is left untouched."""
    return SignedImage(2.0 * x.rgb - 1.0, x.alpha)


def to_unit(x: SignedImage) -> RgbaImage:
    """Inverse of ``to_signed``: rgb back to [0, 1] (exact within one ulp)."""
    return RgbaImage((x.rgb + 1.0) / 2.0, x.alpha)


def load_image(path: str) -> RgbaImage:
    """Decode an 8- or 16-bit RGB or RGBA raster file.

    Values are scaled to [0, 1] by the bit-depth maximum (255 or 65535).
    RGB inputs get an all-ones alpha plane. Other color types (grayscale,
    palette leftovers) are rejected.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputError("cannot read image file %r" % str(path))
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        raise InputError(
            "unsupported color type in %r: expected RGB or RGBA" % str(path)
        )
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise InputError(
            "unsupported bit depth %s in %r" % (raw.dtype, str(path))
        )
    if raw.shape[0] == 0 or raw.shape[1] == 0:
        raise InputError("image %r has a zero dimension" % str(path))
    arr = raw.astype(np.float64) / scale
    # OpenCV decodes BGR(A); reorder to RGB(A)
    rgb = np.transpose(arr[:, :, 2::-1], (2, 0, 1))
    if raw.shape[2] == 4:
        alpha = arr[:, :, 3]
    else:
        alpha = np.ones(arr.shape[:2], dtype=np.float64)
    return RgbaImage(rgb, alpha)


def _encode_planes(planes: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth == 8:
        return np.round(planes * 255.0).astype(np.uint8)
    if bit_depth == 16:
        return np.round(planes * 65535.0).astype(np.uint16)
    raise InputError("bit depth must be 8 or 16, got %r" % (bit_depth,))


def save_image(x: RgbaImage, path: str, bit_depth: int = 8) -> None:
    """Encode an RGBA image to a raster file; 8-bit data round-trips exactly."""
    quant = _encode_planes(np.transpose(x.rgb, (1, 2, 0)), bit_depth)
    alpha = _encode_planes(x.alpha, bit_depth)
    bgra = np.dstack([quant[:, :, ::-1], alpha])
    if not cv2.imwrite(str(path), bgra):
        raise InputError("cannot write image file %r" % str(path))


def save_rgb(x: RgbImage, path: str, bit_depth: int = 8) -> None:
    """Encode a plain RGB image (no alpha plane) to a raster file."""
    quant = _encode_planes(np.transpose(x.rgb, (1, 2, 0)), bit_depth)
    if not cv2.imwrite(str(path), quant[:, :, ::-1]):
        raise InputError("cannot write image file %r" % str(path))
