import numpy as np
import pytest

from vessel_transfer import drunet
from vessel_transfer.drunet import NetworkSpec


def _positive_init(model, seed=0):
    """
    Weights in [0.5, 1.5] / fan_in and positive biases: on positive input every
    pre-activation stays positive and activations keep a moderate scale, so
    finite differences never cross a ReLU kink or saturate the sigmoid.
    """
    rng = np.random.default_rng(seed)
    for name, p in model.params.items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(p.shape[1:]))
            p.value[...] = rng.uniform(0.5, 1.5, size=p.shape) / fan_in
        else:
            p.value[...] = 0.1
    model.params["out.conv.bias"].value[...] = -0.5
    return model


@pytest.fixture
def tiny_model(tiny_spec):
    return drunet.build(tiny_spec)


@pytest.fixture
def smooth_model():
    model = drunet.build(NetworkSpec(depth=2, base_channels=2, latent_dim=3, patch=16, seed=5))
    return _positive_init(model, seed=5)


@pytest.fixture
def ramp_patch():
    """Strictly increasing row-major values, so every pooling window has a unique maximum."""
    return 0.1 + 0.8 * np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0


@pytest.fixture
def stripe_mask():
    mask = np.zeros((16, 16))
    mask[:, 5:8] = 1.0
    mask[11, :] = 1.0
    return mask


@pytest.fixture
def positive_init():
    return _positive_init
