"""
Dense tensor layers with explicit forward and backward passes.

Tensors are float64 ``numpy.ndarray`` values laid out ``[channels, height,
width]``. Every layer used by the segmentation network has a hand-written
backward rule here; ``grad_check`` verifies them against central finite
differences. ``adam_step`` updates ``Parameter`` objects in place.
"""

import dataclasses
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

CE_EPS = 1e-7


@dataclasses.dataclass(eq=False)
class Parameter:
    """
    A trainable tensor with its gradient and Adam moment estimates.

    Attributes:
        name (str): Canonical parameter name, e.g. ``enc0.conv1.weight``
        value (Tensor): Current value
        grad (Tensor): Gradient of the loss, same shape
        adam_m (Tensor): First-moment estimate, starts at zero
        adam_v (Tensor): Second-moment estimate, starts at zero
    """

    name: str
    value: Tensor
    grad: Optional[Tensor] = None
    adam_m: Optional[Tensor] = None
    adam_v: Optional[Tensor] = None

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        for field in ("grad", "adam_m", "adam_v"):
            current = getattr(self, field)
            if current is None:
                setattr(self, field, np.zeros_like(self.value))
            else:
                current = np.array(current, dtype=np.float64)
                if current.shape != self.value.shape:
                    raise ShapeError(
                        f"{self.name}.{field} has shape {current.shape}, value has {self.value.shape}"
                    )
                setattr(self, field, current)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def reset_moments(self) -> None:
        self.adam_m.fill(0.0)
        self.adam_v.fill(0.0)

    def copy(self) -> "Parameter":
        return Parameter(self.name, self.value.copy(), self.grad.copy(), self.adam_m.copy(), self.adam_v.copy())


@dataclasses.dataclass
class AdamConfig:
    """Adam hyperparameters plus the step counter ``t`` (advanced by ``adam_step``)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1), got {value}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if self.t < 0:
            raise ConfigurationError(f"step counter must be >= 0, got {self.t}")


def glorot_uniform(shape: Tuple[int, ...], rng: np.random.Generator) -> Tensor:
    """Glorot-uniform init for a conv weight ``[c_out, c_in, k, k]``."""
    c_out, c_in, kh, kw = shape
    fan_in = c_in * kh * kw
    fan_out = c_out * kh * kw
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --- convolution -----------------------------------------------------------


def _conv_shapes(x: Tensor, weights: Tensor, pad: Optional[int]) -> Tuple[int, int]:
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be [C, H, W], got {x.shape}")
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ShapeError(f"conv2d weights must be [C_out, C_in, k, k], got {weights.shape}")
    if weights.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weights expect {weights.shape[1]} input channels, input has {x.shape[0]}"
        )
    k = weights.shape[2]
    if k % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {k}")
    if pad is None:
        pad = (k - 1) // 2
    if x.shape[1] + 2 * pad < k or x.shape[2] + 2 * pad < k:
        raise ShapeError(f"input {x.shape} too small for kernel {k} with pad {pad}")
    return k, pad


def _windows(x: Tensor, k: int, pad: int) -> Tensor:
    """``[C, H', W', k, k]`` view of all kernel windows of the zero-padded input."""
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(padded, (k, k), axis=(1, 2))


def conv2d(x: Tensor, weights: Tensor, bias: Tensor, pad: Optional[int] = None) -> Tensor:
    """
    2-D cross-correlation with zero padding.

    Args:
        x: Input ``[C_in, H, W]``
        weights: Kernels ``[C_out, C_in, k, k]``, ``k`` odd
        bias: ``[C_out]``
        pad: Zero padding; defaults to ``(k - 1) // 2`` (shape preserving)

    Returns:
        Tensor: ``[C_out, H + 2 pad - k + 1, W + 2 pad - k + 1]``
    """
    k, pad = _conv_shapes(x, weights, pad)
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias must be [{weights.shape[0]}], got {bias.shape}")
    out = np.tensordot(weights, _windows(x, k, pad), axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


def conv2d_backward(grad_out: Tensor, x: Tensor, weights: Tensor, pad: Optional[int] = None) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of ``conv2d`` with respect to input, weights and bias.

    Returns:
        tuple: (grad_input ``[C_in, H, W]``, grad_weights, grad_bias)
    """
    k, pad = _conv_shapes(x, weights, pad)
    out_h = x.shape[1] + 2 * pad - k + 1
    out_w = x.shape[2] + 2 * pad - k + 1
    if grad_out.shape != (weights.shape[0], out_h, out_w):
        raise ShapeError(
            f"grad_out must be {(weights.shape[0], out_h, out_w)}, got {grad_out.shape}"
        )
    grad_bias = grad_out.sum(axis=(1, 2))
    grad_weights = np.tensordot(grad_out, _windows(x, k, pad), axes=([1, 2], [1, 2]))

    # Input gradient: full correlation of grad_out with the flipped kernels.
    flipped = weights[:, :, ::-1, ::-1]
    grad_padded = np.tensordot(flipped, _windows(grad_out, k, k - 1), axes=([0, 2, 3], [0, 3, 4]))
    grad_input = grad_padded[:, pad : pad + x.shape[1], pad : pad + x.shape[2]]
    return np.ascontiguousarray(grad_input), grad_weights, grad_bias


# --- pooling / upsampling --------------------------------------------------


def maxpool2x(x: Tensor) -> Tuple[Tensor, np.ndarray]:
    """
    2x2 max pooling with stride 2.

    Returns:
        tuple: (pooled ``[C, H/2, W/2]``, argmax ``[C, H/2, W/2]`` in 0..3,
        row-major within the window, first occurrence on ties)
    """
    if x.ndim != 3:
        raise ShapeError(f"maxpool2x input must be [C, H, W], got {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x needs even spatial extents, got {h}x{w}")
    blocks = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    argmax = blocks.argmax(axis=3)
    pooled = np.take_along_axis(blocks, argmax[..., None], axis=3)[..., 0]
    return pooled, argmax


def maxpool2x_backward(grad_out: Tensor, argmax: np.ndarray) -> Tensor:
    """Route each pooled gradient to its window's argmax position."""
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match argmax {argmax.shape}")
    c, h, w = grad_out.shape
    routed = (np.arange(4) == argmax[..., None]) * grad_out[..., None]
    return routed.reshape(c, h, w, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * h, 2 * w)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling ``[C, H, W] -> [C, 2H, 2W]``."""
    if x.ndim != 3:
        raise ShapeError(f"upsample2x input must be [C, H, W], got {x.shape}")
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2x_backward(grad_out: Tensor) -> Tensor:
    """Sum each 2x2 block of child gradients."""
    c, h2, w2 = grad_out.shape
    if h2 % 2 or w2 % 2:
        raise ShapeError(f"upsample2x gradient must have even extents, got {grad_out.shape}")
    return grad_out.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4))


# --- activations and loss --------------------------------------------------


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    # derivative at 0 is 0
    return grad_out * (x > 0)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, evaluated without overflow."""
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(grad_out: Tensor, y: Tensor) -> Tensor:
    """Backward of ``sigmoid`` given its output ``y``."""
    return grad_out * y * (1.0 - y)


def pixel_cross_entropy(prob: Tensor, target) -> Tuple[float, Tensor]:
    """
    Mean binary cross-entropy of a probability map against a mask.

    Probabilities are clamped to ``[CE_EPS, 1 - CE_EPS]`` for the loss value.

    Args:
        prob: ``[1, H, W]`` (or ``[H, W]``) sigmoid outputs
        target: ``MaskImage`` or 0/1 array of shape ``[H, W]``

    Returns:
        tuple: (loss, gradient with respect to the pre-sigmoid logits,
        ``(p - y) / (H * W)``, shaped like ``prob``)
    """
    y = np.asarray(getattr(target, "pixels", target), dtype=np.float64)
    p = np.asarray(prob, dtype=np.float64)
    if p.reshape(-1).shape != y.reshape(-1).shape or p.shape[-2:] != y.shape[-2:]:
        raise ShapeError(f"probability map {p.shape} does not match target {y.shape}")
    y = y.reshape(p.shape)
    clamped = np.clip(p, CE_EPS, 1.0 - CE_EPS)
    loss = -float(np.mean(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)))
    grad_logits = (p - y) / y.size
    return loss, grad_logits


# --- optimisation ----------------------------------------------------------


def adam_step(params: Sequence[Parameter], cfg: AdamConfig) -> Sequence[Parameter]:
    """
    One bias-corrected Adam update of every parameter, in place.

    All gradients are checked before anything is modified, so a non-finite
    gradient leaves parameters, moments and ``cfg.t`` untouched.

    Raises:
        NonFiniteError: naming the first parameter with a NaN/inf gradient.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient in parameter {p.name!r}; step aborted")

    cfg.t += 1
    bc1 = 1.0 - cfg.beta1**cfg.t
    bc2 = 1.0 - cfg.beta2**cfg.t
    for p in params:
        g = p.grad
        p.adam_m *= cfg.beta1
        p.adam_m += (1.0 - cfg.beta1) * g
        p.adam_v *= cfg.beta2
        p.adam_v += (1.0 - cfg.beta2) * (g * g)
        p.value -= cfg.lr * (p.adam_m / bc1) / (np.sqrt(p.adam_v / bc2) + cfg.eps)
    return params


def grad_check(
    loss_fn: Callable[[], float],
    params: Sequence[Parameter],
    samples: int = 200,
    h: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """
    Compare analytic gradients with central finite differences.

    ``loss_fn`` evaluates the loss at the current parameter values and fills
    every ``param.grad``. It is called once for the analytic gradients, then
    twice per sampled coordinate with that coordinate shifted by ``+h`` and
    ``-h``. At most ``samples`` coordinates are drawn without replacement
    across all parameters with a generator seeded by ``seed``.

    The error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``.

    Returns:
        float: The maximum error over the sampled coordinates.
    """
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    sizes = [p.value.size for p in params]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    if total == 0:
        return 0.0

    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(total, size=min(samples, total), replace=False))

    worst = 0.0
    worst_name = None
    for index in picked:
        which = int(np.searchsorted(offsets, index, side="right") - 1)
        local = int(index - offsets[which])
        flat = params[which].value.reshape(-1)
        original = flat[local]
        flat[local] = original + h
        plus = loss_fn()
        flat[local] = original - h
        minus = loss_fn()
        flat[local] = original
        numeric = (plus - minus) / (2.0 * h)
        a = analytic[which].reshape(-1)[local]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err > worst:
            worst, worst_name = err, params[which].name

    # Leave the analytic gradients in place for the caller.
    for p, g in zip(params, analytic):
        p.grad[...] = g
    logger.debug("grad_check: max relative error %.3e (at %s)", worst, worst_name)
    return float(worst)
