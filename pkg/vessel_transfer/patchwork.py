"""
Patch extraction and stitching.

Prediction uses a deterministic stride grid whose last row and column are
clamped to the image border, so every pixel is covered and no padding is
needed. Stitching averages all patch values covering a pixel. Training uses a
separate seeded sampler of uniformly drawn patch origins.
"""

import dataclasses
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .imgio import GrayImage, MaskImage, RangeTag

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class PatchGrid:
    """
    Square-patch layout over an image.

    Attributes:
        image_w (int): Image width
        image_h (int): Image height
        patch (int): Patch side
        stride (int): Grid step
        origins (tuple): Row-major ``(x, y)`` top-left corners
    """

    image_w: int
    image_h: int
    patch: int
    stride: int
    origins: Tuple[Tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.origins)


@dataclasses.dataclass(frozen=True, eq=False)
class PatchSet:
    """Patches ``[n, patch, patch]`` in the order of ``grid.origins``."""

    grid: PatchGrid
    patches: np.ndarray
    range_tag: RangeTag = RangeTag.UNIT

    def __post_init__(self):
        arr = np.asarray(self.patches, dtype=np.float64)
        p = self.grid.patch
        if arr.ndim != 3 or arr.shape[1:] != (p, p):
            raise ShapeError(f"patches must be [n, {p}, {p}], got {arr.shape}")
        if arr.shape[0] != len(self.grid.origins):
            raise ShapeError(
                f"{arr.shape[0]} patches for a grid of {len(self.grid.origins)} origins"
            )
        object.__setattr__(self, "patches", arr)

    def map(self, fn) -> "PatchSet":
        """Apply ``fn`` to each patch, keeping the grid."""
        return PatchSet(self.grid, np.stack([fn(p) for p in self.patches]), self.range_tag)


def _axis_origins(extent: int, patch: int, stride: int) -> List[int]:
    origins = list(range(0, extent - patch + 1, stride))
    if origins[-1] + patch < extent:
        origins.append(extent - patch)
    return origins


def plan_grid(image_w: int, image_h: int, patch: int, stride: int) -> PatchGrid:
    """
    Plan a covering patch grid.

    Origins sit at multiples of ``stride``; when the last regular patch stops
    short of the border a clamped origin ``extent - patch`` is added.

    Raises:
        ConfigurationError: ``stride <= 0``, ``stride > patch`` or patch
            larger than the image.
    """
    if stride <= 0:
        raise ConfigurationError(f"stride must be positive, got {stride}")
    if patch <= 0 or stride > patch:
        raise ConfigurationError(f"need 0 < stride <= patch, got stride={stride} patch={patch}")
    if patch > min(image_w, image_h):
        raise ConfigurationError(f"patch {patch} is larger than the {image_w}x{image_h} image")
    xs = _axis_origins(image_w, patch, stride)
    ys = _axis_origins(image_h, patch, stride)
    return PatchGrid(image_w, image_h, patch, stride, tuple((x, y) for y in ys for x in xs))


def extract(img: GrayImage, grid: PatchGrid) -> PatchSet:
    """Cut the grid's sub-rectangles out of ``img``."""
    if (img.width, img.height) != (grid.image_w, grid.image_h):
        raise ShapeError(
            f"grid is for {grid.image_w}x{grid.image_h}, image is {img.width}x{img.height}"
        )
    p = grid.patch
    patches = np.stack([img.pixels[y : y + p, x : x + p] for x, y in grid.origins])
    return PatchSet(grid, patches, img.range_tag)


def stitch(pred: PatchSet) -> GrayImage:
    """
    Reassemble patches into a full image, averaging overlaps.

    Accumulation runs over origins in grid order, so the result does not
    depend on how the patches were produced. The running-mean update leaves a
    pixel covered only by identical values bit-exactly unchanged.
    """
    grid = pred.grid
    p = grid.patch
    out = np.zeros((grid.image_h, grid.image_w))
    count = np.zeros((grid.image_h, grid.image_w))
    for (x, y), patch in zip(grid.origins, pred.patches):
        window = (slice(y, y + p), slice(x, x + p))
        count[window] += 1.0
        out[window] += (patch - out[window]) / count[window]
    if np.any(count == 0):
        raise ShapeError("patch grid leaves pixels uncovered")
    tag = pred.range_tag
    if tag is RangeTag.UNIT:
        out = np.clip(out, 0.0, 1.0)
    return GrayImage(out, tag)


def sample_origins(image_w: int, image_h: int, patch: int, count: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Draw ``count`` uniform random ``(x, y)`` origins of in-bounds patches."""
    if patch > min(image_w, image_h):
        raise ConfigurationError(f"patch {patch} is larger than the {image_w}x{image_h} image")
    xs = rng.integers(0, image_w - patch + 1, size=count)
    ys = rng.integers(0, image_h - patch + 1, size=count)
    return list(zip(xs.tolist(), ys.tolist()))


def sample_training_patches(
    images: Sequence[GrayImage],
    masks: Sequence[MaskImage],
    patch: int,
    per_image: int,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Random ``(patch, mask_patch)`` pairs for training, ``per_image`` from each image.

    Images are visited in order; the generator is consumed in that order so the
    result is reproducible for a fixed seed.
    """
    if len(images) != len(masks):
        raise ShapeError(f"{len(images)} images but {len(masks)} masks")
    rng = rng if rng is not None else np.random.default_rng(seed)
    pairs = []
    for img, mask in zip(images, masks):
        if img.pixels.shape != mask.pixels.shape:
            raise ShapeError(f"mask {mask.pixels.shape} does not match image {img.pixels.shape}")
        for x, y in sample_origins(img.width, img.height, patch, per_image, rng):
            pairs.append(
                (
                    img.pixels[y : y + patch, x : x + patch].copy(),
                    mask.pixels[y : y + patch, x : x + patch].astype(np.float64),
                )
            )
    logger.debug("Sampled %d training patches from %d images", len(pairs), len(images))
    return pairs
