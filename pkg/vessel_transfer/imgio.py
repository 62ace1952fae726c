"""
Image I/O for vessel-transfer.

Holds the image value types, the binary PGM (P5) / PPM (P6) codec, green
channel extraction, the dataset registry (``<root>/manifest.tsv`` plus
``<root>/<dataset>/{images,masks}/<id>.pgm|ppm``) and the deterministic
synthetic vessel generator used for desk-scale experiments.

All pixel values are held as float64 in [0, 1] after loading (byte / 255).
Image objects are immutable: their arrays are copied and marked read-only.
"""

import dataclasses
import enum
import logging
import math
import os
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ImageFormatError, ShapeError

logger = logging.getLogger(__name__)

MAXVAL = 255
MANIFEST_NAME = "manifest.tsv"
MIN_SYNTH_SIZE = 32


class RangeTag(str, enum.Enum):
    """Declared value range of a ``GrayImage``."""

    UNIT = "unit"
    ZSCORE = "zscore"


class Domain(str, enum.Enum):
    TARGET = "target"
    SOURCE = "source"


class PictureLabel(str, enum.Enum):
    SIMILAR = "similar"
    DISSIMILAR = "dissimilar"


class Style(str, enum.Enum):
    RETINA = "retina"
    NEURON = "neuron"


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class RgbImage:
    """Colour image, ``pixels`` shaped ``[height, width, 3]`` with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.pixels, np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"RgbImage needs shape [H, W, 3], got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ImageFormatError("RgbImage values must lie in [0, 1]", field="pixels")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-plane image ``[height, width]`` tagged with its value range."""

    pixels: np.ndarray
    range_tag: RangeTag = RangeTag.UNIT

    def __post_init__(self):
        arr = _frozen_array(self.pixels, np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"GrayImage needs shape [H, W], got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ImageFormatError("GrayImage values must be finite", field="pixels")
        tag = RangeTag(self.range_tag)
        if tag is RangeTag.UNIT and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ImageFormatError("unit GrayImage values must lie in [0, 1]", field="pixels")
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "range_tag", tag)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class MaskImage:
    """Binary image ``[height, width]`` of exact 0/1 values."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"MaskImage needs shape [H, W], got {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ImageFormatError("mask values must be exactly 0 or 1", field="pixels")
        object.__setattr__(self, "pixels", _frozen_array(arr, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_unit(cls, img: GrayImage, level: float = 0.5) -> "MaskImage":
        """Binarise a unit image (``pixel >= level`` becomes 1)."""
        return cls((img.pixels >= level).astype(np.uint8))


@dataclasses.dataclass(frozen=True)
class SampleRecord:
    """One registry entry with its loaded image (and mask, if any)."""

    id: str
    domain: Domain
    dataset_name: str
    image: GrayImage
    mask: Optional[MaskImage] = None
    picture_label: Optional[PictureLabel] = None

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.picture_label is not None:
            object.__setattr__(self, "picture_label", PictureLabel(self.picture_label))
        if self.domain is Domain.TARGET and self.mask is None:
            raise ConfigurationError(f"target sample {self.id!r} has no mask")
        if self.mask is not None and self.mask.pixels.shape != self.image.pixels.shape:
            raise ShapeError(
                f"sample {self.id!r}: mask {self.mask.pixels.shape} does not match "
                f"image {self.image.pixels.shape}"
            )


Image = Union[RgbImage, GrayImage, MaskImage]


# --- PGM / PPM codec -------------------------------------------------------


def _read_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """Parse ``magic width height maxval`` and return them with the data offset."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            field = ("magic", "width", "height", "maxval")[len(tokens)]
            raise ImageFormatError("header ended early", field=field)
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after header", field="maxval")
    pos += 1

    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}", field="magic")
    values = []
    for name, token in zip(("width", "height", "maxval"), tokens[1:]):
        try:
            value = int(token)
        except ValueError as e:
            raise ImageFormatError(f"not an integer: {token!r}", field=name) from e
        if value < 1:
            raise ImageFormatError(f"must be positive, got {value}", field=name)
        values.append(value)
    width, height, maxval = values
    if maxval != MAXVAL:
        raise ImageFormatError(f"expected {MAXVAL}, got {maxval}", field="maxval")
    return magic, width, height, maxval, pos


def load_image(path: str, format: Optional[str] = None) -> Union[RgbImage, GrayImage]:  # pylint: disable=redefined-builtin
    """
    Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Args:
        path (str): File to read
        format (str, optional): ``"pgm"`` or ``"ppm"``; inferred from the
            magic number when omitted

    Returns:
        GrayImage (unit) for PGM, RgbImage for PPM, values = byte / 255.

    Raises:
        ImageFormatError: Missing file, malformed header, wrong maxval,
            truncated or oversized pixel data.
    """
    if not os.path.exists(path):
        raise ImageFormatError(f"no such file: {path}", field="path")
    with open(path, "rb") as f:
        data = f.read()

    magic, width, height, _, offset = _read_header(data)
    expected_magic = {"pgm": b"P5", "ppm": b"P6", None: magic}.get(format)
    if expected_magic is None:
        raise ConfigurationError(f"unknown image format {format!r}")
    if magic != expected_magic:
        raise ImageFormatError(
            f"file is {magic.decode()} but {format} was requested", field="magic"
        )

    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    payload = data[offset:]
    if len(payload) != count:
        raise ImageFormatError(
            f"expected {count} pixel bytes, found {len(payload)}", field="data"
        )
    values = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / MAXVAL
    if channels == 1:
        return GrayImage(values.reshape(height, width))
    return RgbImage(values.reshape(height, width, 3))


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * MAXVAL).astype(np.uint8)


def save_image(path: str, img: Image) -> None:
    """
    Write an image as binary PGM (gray, mask) or PPM (colour), maxval 255.

    Unit values are quantised with ``round(v * 255)``; zscore images must be
    rescaled first.
    """
    if isinstance(img, RgbImage):
        magic, body = b"P6", _quantize(img.pixels)
    elif isinstance(img, MaskImage):
        magic, body = b"P5", (img.pixels * MAXVAL).astype(np.uint8)
    elif isinstance(img, GrayImage):
        if img.range_tag is not RangeTag.UNIT:
            raise ImageFormatError(
                "only unit-range images can be saved; rescale first", field="range_tag"
            )
        magic, body = b"P5", _quantize(img.pixels)
    else:
        raise ImageFormatError(f"cannot save {type(img).__name__}", field="image")

    header = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, MAXVAL)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header + body.tobytes())


def green_channel(img: RgbImage) -> GrayImage:
    """Return channel index 1 of ``img`` as a unit GrayImage."""
    return GrayImage(img.pixels[:, :, 1], RangeTag.UNIT)


def as_gray(img: Union[RgbImage, GrayImage]) -> GrayImage:
    """Green channel for colour input, unchanged for gray input."""
    if isinstance(img, RgbImage):
        return green_channel(img)
    return img


# --- synthetic vessels -----------------------------------------------------

_STYLE_SALT = {Style.RETINA: 0x5E71, Style.NEURON: 0x4E55}


def _disk_offsets(radius: float) -> Tuple[np.ndarray, np.ndarray]:
    r = int(math.ceil(radius))
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    keep = xs**2 + ys**2 <= radius**2 + 1e-9
    return ys[keep], xs[keep]


class _Canvas:
    """Boolean mask with a running foreground count."""

    def __init__(self, height: int, width: int):
        self.mask = np.zeros((height, width), dtype=bool)
        self.count = 0
        self._offsets: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def stamp(self, y: float, x: float, radius: float) -> None:
        if radius not in self._offsets:
            self._offsets[radius] = _disk_offsets(radius)
        oy, ox = self._offsets[radius]
        yy = int(round(y)) + oy
        xx = int(round(x)) + ox
        h, w = self.mask.shape
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yy, xx = yy[valid], xx[valid]
        self.count += int(np.count_nonzero(~self.mask[yy, xx]))
        self.mask[yy, xx] = True


def _smooth_noise(rng: np.random.Generator, height: int, width: int, cell: int) -> np.ndarray:
    """Bilinearly upsampled coarse noise in [0, 1]."""
    coarse = rng.random((height // cell + 2, width // cell + 2))
    gy = np.linspace(0.0, coarse.shape[0] - 1.001, height)
    gx = np.linspace(0.0, coarse.shape[1] - 1.001, width)
    y0 = np.floor(gy).astype(int)
    x0 = np.floor(gx).astype(int)
    fy = (gy - y0)[:, None]
    fx = (gx - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
            + c10 * fy * (1 - fx) + c11 * fy * fx)


def _draw_retina(rng, canvas: _Canvas, height: int, width: int, target: int) -> None:
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    radius_fov = 0.48 * min(height, width)

    def inside(y, x):
        return (y - cy) ** 2 + (x - cx) ** 2 <= (radius_fov - 1.0) ** 2

    max_steps = 4 * max(height, width)
    pending: List[Tuple[float, float, float, float]] = []
    attempts = 0
    while canvas.count < target and attempts < 10_000:
        attempts += 1
        if not pending:
            # Trunks leave from the optic-disc region; later ones may start
            # anywhere in the field of view.
            spread = 0.2 if attempts < 4 else 0.9
            angle = rng.uniform(0.0, 2.0 * math.pi)
            dist = rng.uniform(0.0, spread) * radius_fov
            pending.append(
                (cy + dist * math.sin(angle), cx + dist * math.cos(angle),
                 rng.uniform(0.0, 2.0 * math.pi), 2.0)
            )
        y, x, heading, radius = pending.pop()
        for _ in range(max_steps):
            if not inside(y, x) or canvas.count >= target:
                break
            canvas.stamp(y, x, radius)
            heading += rng.normal(0.0, 0.15)
            y += math.sin(heading)
            x += math.cos(heading)
            if radius > 0.75 and rng.random() < 0.04:
                turn = rng.uniform(0.4, 0.9) * (1 if rng.random() < 0.5 else -1)
                pending.append((y, x, heading + turn, max(radius - 0.5, 0.75)))


def _draw_neuron(rng, canvas: _Canvas, height: int, width: int, target: int) -> None:
    max_steps = 4 * max(height, width)
    attempts = 0
    while canvas.count < target and attempts < 10_000:
        attempts += 1
        y = rng.uniform(0, height - 1)
        x = rng.uniform(0, width - 1)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        radius = 0.75 if rng.random() < 0.5 else 1.0
        for _ in range(max_steps):
            if not (0 <= y < height and 0 <= x < width) or canvas.count >= target:
                break
            canvas.stamp(y, x, radius)
            heading += rng.normal(0.0, 0.08)
            y += math.sin(heading)
            x += math.cos(heading)


def synth_vessels(seed: int, width: int, height: int, style: Union[Style, str] = Style.RETINA) -> Tuple[RgbImage, MaskImage]:
    """
    Generate a deterministic synthetic vessel image and its mask.

    ``retina`` draws branching curves of decreasing width inside a bright
    vignetted disc, vessels darker than the background (strongest in the green
    channel). ``neuron`` draws thin non-branching curves across a smooth
    textured gray background. Curves are added until the mask foreground
    reaches a seeded target fraction (8-14% retina, 7-12% neuron), so the
    foreground always falls within 5-20%.

    Args:
        seed (int): Non-negative seed; output is a pure function of the arguments
        width (int): Image width, at least 32
        height (int): Image height, at least 32
        style (Style | str): ``retina`` or ``neuron``

    Returns:
        tuple: (RgbImage, MaskImage)
    """
    style = Style(style)
    if width < MIN_SYNTH_SIZE or height < MIN_SYNTH_SIZE:
        raise ConfigurationError(
            f"synthetic images must be at least {MIN_SYNTH_SIZE}x{MIN_SYNTH_SIZE}, "
            f"got {width}x{height}"
        )
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")

    rng = np.random.default_rng([seed, _STYLE_SALT[style]])
    canvas = _Canvas(height, width)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    if style is Style.RETINA:
        target = int(math.ceil(rng.uniform(0.08, 0.14) * width * height))
        _draw_retina(rng, canvas, height, width, target)
        mask = canvas.mask
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        rr = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / (0.48 * min(height, width))
        vignette = np.clip(1.0 - 0.35 * rr**2, 0.0, 1.0)
        background = np.array([0.85, 0.50, 0.28])
        vessel = np.array([0.55, 0.22, 0.12])
        rgb = np.where(mask[:, :, None], vessel, background) * vignette[:, :, None]
        rgb = rgb + rng.normal(0.0, 0.02, size=(height, width, 1))
        rgb[rr > 1.0] = 0.03
    else:
        target = int(math.ceil(rng.uniform(0.07, 0.12) * width * height))
        _draw_neuron(rng, canvas, height, width, target)
        mask = canvas.mask
        texture = _smooth_noise(rng, height, width, cell=8)
        gray = 0.55 + 0.3 * texture + rng.normal(0.0, 0.03, size=(height, width))
        gray = np.where(mask, 0.2, gray)
        rgb = np.stack([gray * 0.98, gray, gray * 1.02], axis=2)

    return RgbImage(np.clip(rgb, 0.0, 1.0)), MaskImage(mask.astype(np.uint8))


# --- dataset registry ------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    """One manifest line: ``id<TAB>domain<TAB>dataset_name<TAB>picture_label?``."""

    id: str
    domain: Domain
    dataset_name: str
    picture_label: Optional[PictureLabel] = None

    def to_line(self) -> str:
        label = self.picture_label.value if self.picture_label else ""
        return "\t".join([self.id, self.domain.value, self.dataset_name, label]).rstrip("\t")

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "ManifestEntry":
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (3, 4):
            raise ImageFormatError(
                f"line {lineno}: expected 3 or 4 tab-separated fields, got {len(fields)}",
                field="manifest",
            )
        label = fields[3].strip() if len(fields) == 4 else ""
        try:
            return cls(
                id=fields[0].strip(),
                domain=Domain(fields[1].strip()),
                dataset_name=fields[2].strip(),
                picture_label=PictureLabel(label) if label else None,
            )
        except ValueError as e:
            raise ImageFormatError(f"line {lineno}: {e}", field="manifest") from e


class DatasetRegistry:
    """
    A directory of datasets described by ``manifest.tsv``.

    Layout::

        <root>/manifest.tsv
        <root>/<dataset_name>/images/<id>.ppm|pgm
        <root>/<dataset_name>/masks/<id>.pgm

    Attributes:
        root (str): Registry directory
    """

    def __init__(self, root: str):
        self.root = root

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.root, MANIFEST_NAME)

    def entries(self) -> List[ManifestEntry]:
        """Read the manifest; blank lines and ``#`` comments are skipped."""
        if not os.path.exists(self.manifest_path):
            raise ConfigurationError(f"no manifest at {self.manifest_path}")
        entries = []
        seen = set()
        with open(self.manifest_path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                entry = ManifestEntry.from_line(line, lineno)
                if entry.id in seen:
                    raise ConfigurationError(f"duplicate sample id {entry.id!r} in manifest")
                seen.add(entry.id)
                entries.append(entry)
        return entries

    def write_manifest(self, entries: List[ManifestEntry]) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            for entry in entries:
                f.write(entry.to_line() + "\n")

    def image_path(self, entry: ManifestEntry) -> str:
        base = os.path.join(self.root, entry.dataset_name, "images", entry.id)
        for ext in (".ppm", ".pgm"):
            if os.path.exists(base + ext):
                return base + ext
        raise ImageFormatError(f"no image for sample {entry.id!r} under {base}.*", field="path")

    def mask_path(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.dataset_name, "masks", f"{entry.id}.pgm")

    def load(self, entry: ManifestEntry) -> SampleRecord:
        """Load one entry; colour images are reduced to their green channel."""
        image = as_gray(load_image(self.image_path(entry)))
        mask = None
        if os.path.exists(self.mask_path(entry)):
            loaded = load_image(self.mask_path(entry), "pgm")
            mask = MaskImage.from_unit(loaded)
        return SampleRecord(
            id=entry.id,
            domain=entry.domain,
            dataset_name=entry.dataset_name,
            image=image,
            mask=mask,
            picture_label=entry.picture_label,
        )

    def records(self, domain: Optional[Domain] = None) -> List[SampleRecord]:
        """Load every entry, optionally restricted to one domain, in manifest order."""
        wanted = Domain(domain) if domain is not None else None
        return [
            self.load(entry)
            for entry in self.entries()
            if wanted is None or entry.domain is wanted
        ]

    def add(self, entry: ManifestEntry, image: Union[RgbImage, GrayImage], mask: Optional[MaskImage] = None) -> None:
        """
        Write an image (and mask) into the tree and append the manifest line.

        Raises:
            ConfigurationError: ``entry.id`` is already registered; nothing is written.
        """
        existing = self.entries() if os.path.exists(self.manifest_path) else []
        if any(e.id == entry.id for e in existing):
            raise ConfigurationError(f"duplicate sample id {entry.id!r} in manifest")
        ext = ".ppm" if isinstance(image, RgbImage) else ".pgm"
        save_image(os.path.join(self.root, entry.dataset_name, "images", entry.id + ext), image)
        if mask is not None:
            save_image(self.mask_path(entry), mask)
        self.write_manifest(existing + [entry])
        logger.debug("Registered %s (%s/%s)", entry.id, entry.dataset_name, entry.domain.value)
