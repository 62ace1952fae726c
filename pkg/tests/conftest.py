"""
Test fixtures for the vessel-transfer package.

Fixtures defined here are automatically discovered by pytest and can be used
in any test function or class within the project without explicit imports.

Available fixtures:
- config_file: factory writing a user config file into ``tmp_path``
- rng: seeded numpy generator
- tiny_spec: smallest network spec used by the unit tests
- retina_pair / neuron_pair: one synthetic 64x64 image and its mask per style
- synth_registry: factory building a small on-disk registry of synthetic images

Example:
    ```python
    def test_user_file(config_file):
        config = Config(config_file=config_file("stride = 8\\n"))
        assert config.config["stride"] == 8
    ```
"""

import numpy as np
import pytest

from vessel_transfer.drunet import NetworkSpec
from vessel_transfer.imgio import DatasetRegistry, Domain, ManifestEntry, PictureLabel, synth_vessels


@pytest.fixture
def config_file(tmp_path):
    """Write ``text`` to a fresh config file and return its path."""
    counter = {"n": 0}

    def write(text):
        counter["n"] += 1
        path = tmp_path / f"user-{counter['n']}.conf"
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return NetworkSpec(depth=1, base_channels=2, latent_dim=4, patch=8, seed=0)


@pytest.fixture
def retina_pair():
    return synth_vessels(1, 64, 64, "retina")


@pytest.fixture
def neuron_pair():
    return synth_vessels(1, 64, 64, "neuron")


@pytest.fixture
def synth_registry(tmp_path):
    """
    Build a registry under ``tmp_path/<name>``.

    ``layout`` is a list of ``(dataset, domain, style, count, label, masked)``.
    """

    def build(layout, name="registry", size=64):
        registry = DatasetRegistry(str(tmp_path / name))
        seed = 0
        for dataset, domain, style, count, label, masked in layout:
            for _ in range(count):
                image, mask = synth_vessels(seed, size, size, style)
                registry.add(
                    ManifestEntry(
                        id=f"{dataset}-{seed:03d}",
                        domain=Domain(domain),
                        dataset_name=dataset,
                        picture_label=PictureLabel(label) if label else None,
                    ),
                    image,
                    mask if masked else None,
                )
                seed += 1
        return registry

    return build
