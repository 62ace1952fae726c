"""
Dimensionality-reduced U-Net.

The network is a small U-Net whose deepest level carries an extra 1x1
channel-reducing convolution (the dimensionality-reduced layer). The
spatially averaged activation of that layer is the image-patch latent used by
transfer selection; the decoder reads from the same activation, so the latent
is part of the segmentation path.

Layer layout for ``depth = D`` (canonical parameter order)::

    enc{s}.conv1, enc{s}.conv2      s = 0 .. D-1   conv3x3 -> relu, twice, then maxpool2x
    bottleneck.conv                               conv3x3 -> relu
    reduce.conv                                   conv1x1 -> relu   (latent_dim channels)
    dec{s}.conv                     s = D-1 .. 0   upsample2x, concat enc{s} skip, conv3x3 -> relu
    out.conv                                      conv1x1 -> sigmoid

Checkpoints are little-endian binary files (see ``save_checkpoint``).
"""

import dataclasses
import logging
import os
import struct
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor_engine as te
from .errors import CheckpointError, ConfigurationError, NonFiniteError, ShapeError
from .imgio import GrayImage, MaskImage, RangeTag
from .patchwork import PatchSet, extract, plan_grid, stitch
from .tensor_engine import AdamConfig, Parameter

logger = logging.getLogger(__name__)

LatentVector = np.ndarray

CHECKPOINT_MAGIC = b"DRU1"
# Forward outputs are kept strictly inside (0, 1).
PROB_EPS = 1e-12

_U64 = struct.Struct("<Q")


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    """
    Architecture of a dimensionality-reduced U-Net.

    Attributes:
        depth (int): Pooling stages
        base_channels (int): Channels of the first stage, doubling per stage
        latent_dim (int): Channels of the dimensionality-reduced layer
        patch (int): Input side in pixels, divisible by ``2 ** depth``
        seed (int): Initialisation seed
    """

    depth: int = 2
    base_channels: int = 16
    latent_dim: int = 64
    patch: int = 48
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigurationError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.patch < 1 or self.patch % (2**self.depth):
            raise ConfigurationError(
                f"patch {self.patch} must be a positive multiple of 2**depth = {2 ** self.depth}"
            )

    def to_block(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_block(cls, text: str) -> "NetworkSpec":
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CheckpointError(f"malformed spec line {line!r}")
            values[key.strip()] = value.strip()
        names = {f.name for f in dataclasses.fields(cls)}
        if set(values) != names:
            raise CheckpointError(f"spec block has keys {sorted(values)}, expected {sorted(names)}")
        try:
            return cls(**{k: int(v) for k, v in values.items()})
        except ValueError as e:
            raise CheckpointError(f"spec block value is not an integer: {e}") from e
        except ConfigurationError as e:
            raise CheckpointError(f"spec block is invalid: {e.message}") from e

    def same_architecture(self, other: "NetworkSpec") -> bool:
        """Equal in everything but the initialisation seed."""
        return dataclasses.replace(self, seed=0) == dataclasses.replace(other, seed=0)


def parameter_shapes(spec: NetworkSpec) -> Dict[str, Tuple[int, ...]]:
    """Canonical ``name -> shape`` table; a pure function of ``spec``."""
    shapes: Dict[str, Tuple[int, ...]] = {}

    def conv(name, c_out, c_in, k):
        shapes[f"{name}.weight"] = (c_out, c_in, k, k)
        shapes[f"{name}.bias"] = (c_out,)

    width = [spec.base_channels * 2**s for s in range(spec.depth + 1)]
    c_in = 1
    for s in range(spec.depth):
        conv(f"enc{s}.conv1", width[s], c_in, 3)
        conv(f"enc{s}.conv2", width[s], width[s], 3)
        c_in = width[s]
    conv("bottleneck.conv", width[spec.depth], c_in, 3)
    conv("reduce.conv", spec.latent_dim, width[spec.depth], 1)
    below = spec.latent_dim
    for s in reversed(range(spec.depth)):
        conv(f"dec{s}.conv", width[s], below + width[s], 3)
        below = width[s]
    conv("out.conv", 1, below, 1)
    return shapes


def parameter_count(spec: NetworkSpec) -> int:
    return int(sum(np.prod(shape) for shape in parameter_shapes(spec).values()))


@dataclasses.dataclass(eq=False)
class Model:
    """A network spec and its named parameters in canonical order."""

    spec: NetworkSpec
    params: Dict[str, Parameter]

    def __post_init__(self):
        expected = parameter_shapes(self.spec)
        actual = {name: p.shape for name, p in self.params.items()}
        if list(actual.items()) != list(expected.items()):
            raise ShapeError("parameter table does not match the network spec")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name].value

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "Model":
        return Model(self.spec, {name: p.copy() for name, p in self.params.items()})

    def equals(self, other: "Model") -> bool:
        """Bit-exact equality of spec and parameter values."""
        return self.spec == other.spec and all(
            np.array_equal(p.value, other.params[name].value) for name, p in self.params.items()
        )


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Training loop settings.

    Attributes:
        epochs (int): Passes over the data
        batch (int): Samples per Adam step
        patches_per_image (int): Random patches drawn per training image
        adam (AdamConfig): Optimiser settings (copied per training run)
        seed (int): Seeds patch sampling and the per-epoch shuffle
    """

    epochs: int = 20
    batch: int = 8
    patches_per_image: int = 16
    adam: AdamConfig = dataclasses.field(default_factory=AdamConfig)
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch", "patches_per_image"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")


def build(spec: NetworkSpec) -> Model:
    """Glorot-uniform weights and zero biases, drawn in canonical order from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    params = {}
    for name, shape in parameter_shapes(spec).items():
        if name.endswith(".weight"):
            value = te.glorot_uniform(shape, rng)
        else:
            value = np.zeros(shape)
        params[name] = Parameter(name, value)
    logger.debug("Built network with %d parameters", parameter_count(spec))
    return Model(spec, params)


# --- forward / backward ----------------------------------------------------


def _as_input(spec: NetworkSpec, patch) -> np.ndarray:
    pixels = np.asarray(getattr(patch, "pixels", patch), dtype=np.float64)
    if pixels.shape != (spec.patch, spec.patch):
        raise ShapeError(f"network expects {spec.patch}x{spec.patch} patches, got {pixels.shape}")
    return pixels[None, :, :]


def _conv(model: Model, name: str, x: np.ndarray) -> np.ndarray:
    return te.conv2d(x, model[f"{name}.weight"], model[f"{name}.bias"])


def _forward(model: Model, x: np.ndarray, cache: Optional[dict] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Raw forward pass; returns (sigmoid output, latent activation)."""
    depth = model.spec.depth
    h = x
    skips = []
    for s in range(depth):
        z1 = _conv(model, f"enc{s}.conv1", h)
        a1 = te.relu(z1)
        z2 = _conv(model, f"enc{s}.conv2", a1)
        a2 = te.relu(z2)
        pooled, argmax = te.maxpool2x(a2)
        if cache is not None:
            cache[f"enc{s}"] = (h, z1, a1, z2, argmax)
        skips.append(a2)
        h = pooled
    zb = _conv(model, "bottleneck.conv", h)
    ab = te.relu(zb)
    zr = _conv(model, "reduce.conv", ab)
    latent = te.relu(zr)
    if cache is not None:
        cache["bottleneck"] = (h, zb)
        cache["reduce"] = (ab, zr)
    h = latent
    for s in reversed(range(depth)):
        up = te.upsample2x(h)
        joined = np.concatenate([up, skips[s]], axis=0)
        zd = _conv(model, f"dec{s}.conv", joined)
        if cache is not None:
            cache[f"dec{s}"] = (joined, zd, up.shape[0])
        h = te.relu(zd)
    logits = _conv(model, "out.conv", h)
    if cache is not None:
        cache["out"] = h
    return te.sigmoid(logits), latent


def _backward(model: Model, cache: dict, grad_logits: np.ndarray) -> Dict[str, np.ndarray]:
    grads: Dict[str, np.ndarray] = {}

    def conv_back(name, grad_out, x):
        grad_in, gw, gb = te.conv2d_backward(grad_out, x, model[f"{name}.weight"])
        grads[f"{name}.weight"] = gw
        grads[f"{name}.bias"] = gb
        return grad_in

    depth = model.spec.depth
    g = conv_back("out.conv", grad_logits, cache["out"])
    skip_grads = {}
    for s in range(depth):
        joined, zd, up_channels = cache[f"dec{s}"]
        g_joined = conv_back(f"dec{s}.conv", te.relu_backward(g, zd), joined)
        skip_grads[s] = g_joined[up_channels:]
        g = te.upsample2x_backward(g_joined[:up_channels])

    ab, zr = cache["reduce"]
    g = conv_back("reduce.conv", te.relu_backward(g, zr), ab)
    h, zb = cache["bottleneck"]
    g = conv_back("bottleneck.conv", te.relu_backward(g, zb), h)

    for s in reversed(range(depth)):
        h, z1, a1, z2, argmax = cache[f"enc{s}"]
        g = te.maxpool2x_backward(g, argmax) + skip_grads[s]
        g = conv_back(f"enc{s}.conv2", te.relu_backward(g, z2), a1)
        g = conv_back(f"enc{s}.conv1", te.relu_backward(g, z1), h)
    return grads


def forward(model: Model, patch: Union[GrayImage, np.ndarray]) -> np.ndarray:
    """
    Per-pixel vessel probability of one patch.

    Returns:
        ndarray: ``[1, patch, patch]`` with values strictly inside (0, 1)
    """
    prob, _ = _forward(model, _as_input(model.spec, patch))
    return np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)


def forward_batch(model: Model, patches: np.ndarray) -> np.ndarray:
    """``[n, p, p]`` patches to ``[n, p, p]`` probabilities, one patch at a time."""
    if len(patches) == 0:
        return np.zeros((0, model.spec.patch, model.spec.patch))
    return np.stack([forward(model, p)[0] for p in patches])


def extract_latent(model: Model, patch: Union[GrayImage, np.ndarray]) -> LatentVector:
    """Spatial mean of the dimensionality-reduced layer's activation, ``latent_dim`` values >= 0."""
    _, latent = _forward(model, _as_input(model.spec, patch))
    return latent.mean(axis=(1, 2))


def loss_and_grad(model: Model, patch, mask) -> Tuple[float, Dict[str, np.ndarray]]:
    """Cross-entropy of one patch and the gradient of every parameter."""
    cache: dict = {}
    prob, _ = _forward(model, _as_input(model.spec, patch), cache)
    target = np.asarray(getattr(mask, "pixels", mask), dtype=np.float64)
    loss, grad_logits = te.pixel_cross_entropy(prob, target)
    return loss, _backward(model, cache, grad_logits)


def loss_fn_for(model: Model, patch, mask) -> Callable[[], float]:
    """Closure that fills ``model``'s gradients and returns the loss, for ``grad_check``."""

    def evaluate() -> float:
        loss, grads = loss_and_grad(model, patch, mask)
        for name, g in grads.items():
            model.params[name].grad[...] = g
        return loss

    return evaluate


# --- training --------------------------------------------------------------


def _check_training_data(spec: NetworkSpec, data) -> List[Tuple[np.ndarray, np.ndarray]]:
    if not data:
        raise ConfigurationError("no training patches")
    checked = []
    for i, (patch, mask) in enumerate(data):
        x = _as_input(spec, patch)[0]
        y = np.asarray(getattr(mask, "pixels", mask), dtype=np.float64)
        if y.shape != x.shape:
            raise ShapeError(f"training mask {i} has shape {y.shape}, patch has {x.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigurationError(f"training mask {i} is not binary")
        checked.append((x, y))
    return checked


def train(
    model: Model,
    data: Sequence[Tuple[Union[np.ndarray, GrayImage], Union[np.ndarray, MaskImage]]],
    cfg: TrainConfig,
) -> Tuple[Model, List[float]]:
    """
    Minibatch Adam training on ``(patch, mask)`` pairs.

    The input model is not modified. Adam starts fresh on every call: the
    step counter restarts from ``cfg.adam.t`` and the moment estimates
    copied from ``model`` are zeroed. Each epoch visits the data in an order
    drawn from a generator seeded by ``cfg.seed``; a batch's gradients are
    accumulated in that order and averaged before one Adam step.

    Returns:
        tuple: (trained Model, per-epoch mean training loss)

    Raises:
        NonFiniteError: naming the epoch and batch whose loss was not finite.
    """
    pairs = _check_training_data(model.spec, data)
    trained = model.copy()
    params = trained.parameters()
    for p in params:
        p.reset_moments()
    adam = dataclasses.replace(cfg.adam)
    rng = np.random.default_rng(cfg.seed)

    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for batch_index, start in enumerate(range(0, len(pairs), cfg.batch)):
            members = order[start : start + cfg.batch]
            trained.zero_grad()
            batch_loss = 0.0
            for i in members:
                loss, grads = loss_and_grad(trained, *pairs[i])
                batch_loss += loss
                for name, g in grads.items():
                    trained.params[name].grad += g
            if not np.isfinite(batch_loss):
                raise NonFiniteError(f"non-finite loss in epoch {epoch}, batch {batch_index}")
            for p in params:
                p.grad /= len(members)
            te.adam_step(params, adam)
            epoch_loss += batch_loss
        history.append(epoch_loss / len(pairs))
        logger.debug("epoch %d/%d loss %.6f", epoch, cfg.epochs, history[-1])
    return trained, history


# --- whole-image helpers ---------------------------------------------------


def predict_image(model: Model, img: GrayImage, stride: Optional[int] = None) -> GrayImage:
    """Probability map of a whole image: patch grid, forward, stitch."""
    grid = plan_grid(img.width, img.height, model.spec.patch, stride or model.spec.patch // 2)
    patches = extract(img, grid)
    return stitch(PatchSet(grid, forward_batch(model, patches.patches), RangeTag.UNIT))


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(model: Model, path: str) -> None:
    """
    Write ``model`` to ``path`` atomically.

    Layout: ``DRU1``, u64 length + UTF-8 ``key=value`` spec block, then per
    parameter in canonical order: u64 length + UTF-8 name, u64 rank, u64
    extents, float64 values. All integers and floats are little-endian.
    """
    chunks = [CHECKPOINT_MAGIC]
    block = model.spec.to_block().encode("utf-8")
    chunks += [_U64.pack(len(block)), block]
    for name, p in model.params.items():
        encoded = name.encode("utf-8")
        chunks += [_U64.pack(len(encoded)), encoded, _U64.pack(p.value.ndim)]
        chunks += [_U64.pack(extent) for extent in p.value.shape]
        chunks.append(p.value.astype("<f8").tobytes())

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)
    logger.info("Wrote checkpoint %s", path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def load_checkpoint(path: str, expected_spec: Optional[NetworkSpec] = None) -> Model:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Args:
        path: Checkpoint file
        expected_spec: When given, the stored architecture must match it
            (the seed may differ)

    Raises:
        CheckpointError: bad magic, truncation, trailing bytes, a parameter
            table that disagrees with the stored spec, or an architecture
            mismatch with ``expected_spec``.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    reader = _Reader(data)
    if reader.take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a DRU1 checkpoint")
    block_len = reader.u64("spec length")
    try:
        spec = NetworkSpec.from_block(reader.take(block_len, "spec block").decode("utf-8"))
    except UnicodeDecodeError as e:
        raise CheckpointError("spec block is not UTF-8") from e

    if expected_spec is not None and not spec.same_architecture(expected_spec):
        raise CheckpointError(
            f"checkpoint architecture {spec.to_block().strip()!r} does not match "
            f"requested {expected_spec.to_block().strip()!r}".replace("\n", " ")
        )

    params = {}
    for name, shape in parameter_shapes(spec).items():
        stored_name = reader.take(reader.u64("name length"), "name").decode("utf-8", "replace")
        rank = reader.u64(f"rank of {stored_name}")
        if rank > 8:
            raise CheckpointError(f"implausible rank {rank} for {stored_name}")
        extents = tuple(reader.u64(f"extents of {stored_name}") for _ in range(rank))
        if stored_name != name or extents != shape:
            raise CheckpointError(
                f"parameter table mismatch: found {stored_name}{list(extents)}, "
                f"spec requires {name}{list(shape)}"
            )
        count = int(np.prod(shape))
        values = np.frombuffer(reader.take(8 * count, f"values of {name}"), dtype="<f8")
        params[name] = Parameter(name, values.astype(np.float64).reshape(shape))
    if reader.pos != len(data):
        raise CheckpointError(f"{len(data) - reader.pos} trailing bytes after the last parameter")
    logger.debug("Loaded checkpoint %s", path)
    return Model(spec, params)
