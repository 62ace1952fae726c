"""
Tests for the dimensionality-reduced U-Net: layout, forward pass, gradients.
"""

import numpy as np
import pytest

from vessel_transfer import drunet
from vessel_transfer.drunet import NetworkSpec
from vessel_transfer.errors import ConfigurationError, ShapeError
from vessel_transfer.imgio import GrayImage, RangeTag
from vessel_transfer.tensor_engine import grad_check


class TestNetworkSpec:
    """Architecture validation and layout."""

    @pytest.mark.parametrize(
        "kwargs",
        [{"depth": 0}, {"base_channels": 0}, {"latent_dim": 0}, {"patch": 10, "depth": 2}, {"patch": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            NetworkSpec(**kwargs)

    def test_parameter_count(self, tiny_spec):
        assert drunet.parameter_count(tiny_spec) == 267

    def test_canonical_order(self):
        names = list(drunet.parameter_shapes(NetworkSpec(depth=2, base_channels=2, latent_dim=3, patch=8)))
        layers = list(dict.fromkeys(name.rsplit(".", 1)[0] for name in names))
        assert layers == [
            "enc0.conv1",
            "enc0.conv2",
            "enc1.conv1",
            "enc1.conv2",
            "bottleneck.conv",
            "reduce.conv",
            "dec1.conv",
            "dec0.conv",
            "out.conv",
        ]
        assert names[:2] == ["enc0.conv1.weight", "enc0.conv1.bias"]

    def test_decoder_reads_latent(self):
        shapes = drunet.parameter_shapes(NetworkSpec(depth=2, base_channels=4, latent_dim=5, patch=8))
        assert shapes["reduce.conv.weight"] == (5, 16, 1, 1)
        assert shapes["dec1.conv.weight"] == (8, 5 + 8, 3, 3)
        assert shapes["dec0.conv.weight"] == (4, 8 + 4, 3, 3)
        assert shapes["out.conv.weight"] == (1, 4, 1, 1)

    def test_same_architecture_ignores_seed(self, tiny_spec):
        assert tiny_spec.same_architecture(NetworkSpec(depth=1, base_channels=2, latent_dim=4, patch=8, seed=9))
        assert not tiny_spec.same_architecture(NetworkSpec(depth=1, base_channels=2, latent_dim=5, patch=8))

    def test_block_round_trip(self, tiny_spec):
        assert NetworkSpec.from_block(tiny_spec.to_block()) == tiny_spec


class TestBuild:
    """Initialisation."""

    def test_deterministic(self, tiny_spec):
        assert drunet.build(tiny_spec).equals(drunet.build(tiny_spec))

    def test_seed_matters(self, tiny_spec):
        other = NetworkSpec(depth=1, base_channels=2, latent_dim=4, patch=8, seed=1)
        assert not np.array_equal(drunet.build(tiny_spec)["enc0.conv1.weight"], drunet.build(other)["enc0.conv1.weight"])

    def test_biases_zero(self, tiny_model):
        for name, p in tiny_model.params.items():
            if name.endswith(".bias"):
                assert not p.value.any()

    def test_bad_parameter_table(self, tiny_model):
        params = dict(tiny_model.params)
        params.pop("out.conv.bias")
        with pytest.raises(ShapeError):
            drunet.Model(tiny_model.spec, params)

    def test_copy_is_independent(self, tiny_model):
        clone = tiny_model.copy()
        clone.params["out.conv.bias"].value[...] = 1.0
        assert tiny_model["out.conv.bias"][0] == 0.0
        assert not clone.equals(tiny_model)


class TestForward:
    """Forward pass and latent extraction."""

    def test_shape_and_range(self, tiny_model, rng):
        prob = drunet.forward(tiny_model, rng.random((8, 8)))
        assert prob.shape == (1, 8, 8)
        assert np.all((prob > 0.0) & (prob < 1.0))

    def test_accepts_gray_image(self, tiny_model, rng):
        pixels = rng.random((8, 8))
        np.testing.assert_array_equal(
            drunet.forward(tiny_model, GrayImage(pixels)), drunet.forward(tiny_model, pixels)
        )

    def test_zero_output_layer_gives_half(self, tiny_model, rng):
        tiny_model.params["out.conv.weight"].value[...] = 0.0
        prob = drunet.forward(tiny_model, rng.random((8, 8)))
        assert np.all(prob == 0.5)

    def test_zero_input_gives_zero_latent(self, tiny_model):
        latent = drunet.extract_latent(tiny_model, np.zeros((8, 8)))
        assert latent.shape == (4,)
        assert np.all(latent == 0.0)

    def test_latent_non_negative(self, tiny_model, rng):
        assert np.all(drunet.extract_latent(tiny_model, rng.random((8, 8))) >= 0.0)

    def test_deterministic(self, tiny_model, rng):
        patch = rng.random((8, 8))
        np.testing.assert_array_equal(drunet.forward(tiny_model, patch), drunet.forward(tiny_model, patch))

    def test_wrong_patch_size(self, tiny_model):
        with pytest.raises(ShapeError):
            drunet.forward(tiny_model, np.zeros((16, 16)))

    def test_batch_matches_single(self, tiny_model, rng):
        patches = rng.random((3, 8, 8))
        batch = drunet.forward_batch(tiny_model, patches)
        np.testing.assert_array_equal(batch[1], drunet.forward(tiny_model, patches[1])[0])
        assert drunet.forward_batch(tiny_model, np.zeros((0, 8, 8))).shape == (0, 8, 8)

    def test_predict_image(self, tiny_model, rng):
        img = GrayImage(rng.random((20, 13)))
        prob = drunet.predict_image(tiny_model, img)
        assert prob.pixels.shape == (20, 13)
        assert prob.range_tag is RangeTag.UNIT
        assert np.all((prob.pixels > 0.0) & (prob.pixels < 1.0))


class TestGradients:
    """Analytic gradients of the whole network against finite differences."""

    def test_every_parameter_has_a_gradient(self, tiny_model, rng):
        _, grads = drunet.loss_and_grad(tiny_model, rng.random((8, 8)), np.eye(8))
        assert list(grads) == list(tiny_model.params)
        for name, g in grads.items():
            assert g.shape == tiny_model.params[name].shape

    def test_full_network_grad_check(self, smooth_model, ramp_patch, stripe_mask):
        loss_fn = drunet.loss_fn_for(smooth_model, ramp_patch, stripe_mask)
        assert grad_check(loss_fn, smooth_model.parameters(), samples=200, seed=3) < 1e-4

    def test_grad_check_catches_a_broken_rule(self, positive_init, ramp_patch, stripe_mask):
        model = positive_init(drunet.build(NetworkSpec(depth=1, base_channels=1, latent_dim=1, patch=16, seed=2)))
        assert drunet.parameter_count(model.spec) == 64
        correct = drunet.loss_fn_for(model, ramp_patch, stripe_mask)

        def broken():
            loss = correct()
            model.params["out.conv.bias"].grad *= 2.0
            return loss

        assert grad_check(correct, model.parameters(), samples=200) < 1e-4
        assert grad_check(broken, model.parameters(), samples=200) > 0.3
