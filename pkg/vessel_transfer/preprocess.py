"""
Fundus preprocessing: per-image z-score normalisation, min-max rescaling,
contrast-limited adaptive histogram equalisation (CLAHE) and gamma adjustment.

``preprocess_chain`` runs the full sequence used before patching:
green channel -> normalize -> rescale_unit -> clahe -> gamma_adjust.
"""

import dataclasses
import logging
import re
from typing import Tuple, Union

import numpy as np

from .errors import ConfigurationError, ImageFormatError
from .imgio import GrayImage, RangeTag, RgbImage, as_gray

logger = logging.getLogger(__name__)

# Relative std below which an image counts as constant.
_CONSTANT_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class NormalizationStats:
    """Mean and population standard deviation of one image (std 0 flags a constant image)."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ConfigurationError(f"std must be >= 0, got {self.std}")


@dataclasses.dataclass(frozen=True)
class ClaheConfig:
    """
    CLAHE parameters.

    Attributes:
        tiles_x (int): Tile columns
        tiles_y (int): Tile rows
        clip_limit (float): Clip height as a multiple of the uniform bin height (> 1)
        bins (int): Histogram bins
    """

    tiles_x: int = 8
    tiles_y: int = 8
    clip_limit: float = 2.0
    bins: int = 256

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ConfigurationError(f"tile grid must be positive, got {self.tiles_x}x{self.tiles_y}")
        if not self.clip_limit > 1.0:
            raise ConfigurationError(f"clip_limit must be > 1, got {self.clip_limit}")
        if self.bins < 2:
            raise ConfigurationError(f"bins must be >= 2, got {self.bins}")


@dataclasses.dataclass(frozen=True)
class PreprocessConfig:
    gamma: float = 1.2
    clahe: ClaheConfig = dataclasses.field(default_factory=ClaheConfig)


def parse_tiles(text: str) -> Tuple[int, int]:
    """Parse ``"<n>x<m>"`` into ``(tiles_x, tiles_y)``."""
    match = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not match:
        raise ConfigurationError(f"tiles must look like 8x8, got {text!r}")
    return int(match.group(1)), int(match.group(2))


def _require_unit(img: GrayImage, op: str) -> None:
    if img.range_tag is not RangeTag.UNIT:
        raise ImageFormatError(f"{op} needs a unit-range image", field="range_tag")


def normalize(img: GrayImage) -> Tuple[GrayImage, NormalizationStats]:
    """
    Z-score an image with its own mean and population std.

    A constant image (std 0) maps to all zeros and reports ``std = 0``.

    Returns:
        tuple: (zscore GrayImage, NormalizationStats)
    """
    pixels = img.pixels
    mean = float(pixels.mean())
    std = float(pixels.std())
    if std <= _CONSTANT_TOL * max(1.0, abs(mean)):
        return GrayImage(np.zeros_like(pixels), RangeTag.ZSCORE), NormalizationStats(mean, 0.0)
    return GrayImage((pixels - mean) / std, RangeTag.ZSCORE), NormalizationStats(mean, std)


def denormalize(img: GrayImage, stats: NormalizationStats) -> GrayImage:
    """Invert ``normalize``: ``x * std + mean``."""
    pixels = img.pixels * stats.std + stats.mean
    in_unit = pixels.min() >= 0.0 and pixels.max() <= 1.0
    return GrayImage(pixels, RangeTag.UNIT if in_unit else RangeTag.ZSCORE)


def rescale_unit(img: GrayImage) -> GrayImage:
    """Affinely map the image's [min, max] onto [0, 1]; constant images become 0.5."""
    pixels = img.pixels
    lo, hi = float(pixels.min()), float(pixels.max())
    if hi <= lo:
        return GrayImage(np.full_like(pixels, 0.5), RangeTag.UNIT)
    out = (pixels - lo) / (hi - lo)
    return GrayImage(np.clip(out, 0.0, 1.0), RangeTag.UNIT)


def _tile_bounds(extent: int, tiles: int) -> np.ndarray:
    """Tile start offsets plus the end; the last tile absorbs the remainder."""
    size = extent // tiles
    bounds = np.arange(tiles + 1) * size
    bounds[-1] = extent
    return bounds


def _tile_mapping(bins_of_tile: np.ndarray, bins: int, clip_limit: float) -> np.ndarray:
    """Clipped-histogram CDF for one tile, values in (0, 1]."""
    n = bins_of_tile.size
    hist = np.bincount(bins_of_tile.ravel(), minlength=bins).astype(np.float64)
    limit = clip_limit * n / bins
    excess = np.maximum(hist - limit, 0.0).sum()
    hist = np.minimum(hist, limit) + excess / bins
    return np.cumsum(hist) / n


def _interp_axis(extent: int, bounds: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For each coordinate: lower tile, upper tile and weight of the upper tile."""
    centers = (bounds[:-1] + bounds[1:] - 1) / 2.0
    coords = np.arange(extent, dtype=np.float64)
    upper = np.searchsorted(centers, coords, side="right")
    lower = np.clip(upper - 1, 0, len(centers) - 1)
    upper = np.clip(upper, 0, len(centers) - 1)
    span = centers[upper] - centers[lower]
    weight = np.where(span > 0, (coords - centers[lower]) / np.where(span > 0, span, 1.0), 0.0)
    return lower, upper, np.clip(weight, 0.0, 1.0)


def clahe(img: GrayImage, cfg: ClaheConfig = ClaheConfig()) -> GrayImage:
    """
    Contrast-limited adaptive histogram equalisation.

    Each tile's histogram (``cfg.bins`` levels) is clipped at
    ``clip_limit * tile_pixels / bins`` with the excess spread evenly over all
    bins; the tile's mapping is its normalised CDF. Every pixel is remapped by
    bilinear interpolation between the mappings of the four nearest tile
    centres (edge pixels use the nearest tiles only).

    Raises:
        ConfigurationError: tile grid larger than the image.
    """
    _require_unit(img, "clahe")
    height, width = img.pixels.shape
    if cfg.tiles_y > height or cfg.tiles_x > width:
        raise ConfigurationError(
            f"tile grid {cfg.tiles_x}x{cfg.tiles_y} is larger than the {width}x{height} image"
        )

    levels = np.minimum((img.pixels * cfg.bins).astype(np.int64), cfg.bins - 1)
    ybounds = _tile_bounds(height, cfg.tiles_y)
    xbounds = _tile_bounds(width, cfg.tiles_x)

    maps = np.empty((cfg.tiles_y, cfg.tiles_x, cfg.bins))
    for ty in range(cfg.tiles_y):
        for tx in range(cfg.tiles_x):
            tile = levels[ybounds[ty] : ybounds[ty + 1], xbounds[tx] : xbounds[tx + 1]]
            maps[ty, tx] = _tile_mapping(tile, cfg.bins, cfg.clip_limit)

    y0, y1, wy = _interp_axis(height, ybounds)
    x0, x1, wx = _interp_axis(width, xbounds)
    wy = wy[:, None]
    wx = wx[None, :]
    ry0, ry1 = y0[:, None], y1[:, None]
    cx0, cx1 = x0[None, :], x1[None, :]
    out = (
        (1 - wy) * (1 - wx) * maps[ry0, cx0, levels]
        + (1 - wy) * wx * maps[ry0, cx1, levels]
        + wy * (1 - wx) * maps[ry1, cx0, levels]
        + wy * wx * maps[ry1, cx1, levels]
    )
    return GrayImage(np.clip(out, 0.0, 1.0), RangeTag.UNIT)


def gamma_adjust(img: GrayImage, gamma: float) -> GrayImage:
    """Pointwise power law ``x ** gamma`` on a unit image."""
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be > 0, got {gamma}")
    _require_unit(img, "gamma_adjust")
    return GrayImage(np.power(img.pixels, gamma), RangeTag.UNIT)


def preprocess_chain(img: Union[RgbImage, GrayImage], cfg: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    """Green channel, normalize, rescale_unit, clahe, gamma_adjust."""
    gray = as_gray(img)
    zscored, stats = normalize(gray)
    logger.debug("Normalised with mean=%.6f std=%.6f", stats.mean, stats.std)
    return gamma_adjust(clahe(rescale_unit(zscored), cfg.clahe), cfg.gamma)
